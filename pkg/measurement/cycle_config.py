"""
計測サイクル設定モジュール
KEY=VALUE 形式の設定ファイル（python-dotenv で読込）から CycleConfig を作る
"""
import math
from dataclasses import dataclass, field, fields, replace
from datetime import datetime
from pathlib import Path
from typing import Optional

from dateutil import parser as date_parser
from dateutil.relativedelta import relativedelta
from dotenv import dotenv_values

from config.constants import (
    BITRATE_CLASS_EDGES,
    BURSTINESS_CLASS_EDGES,
    CUTOFF_SECONDS,
    CYCLE_START_DATE,
    DURATION_CLASS_EDGES,
    INITIAL_BUFFER_SECONDS,
    LINK_KBPS_RANGE,
    MIN_LENGTH_SECONDS,
    TESTS_PER_MA_PER_CYCLE,
    ZIPF_EXPONENT,
)
from playout.verdict import ClassThresholds
from utils.errors import ConfigError
from utils.logger import get_logger

logger = get_logger(__name__)

# N の既定値の下限（N = max(MIN_CHART_SIZE, M // 50)）
MIN_CHART_SIZE = 20
CHART_SIZE_DIVISOR = 50


def default_chart_size(num_agents: int) -> int:
    return max(MIN_CHART_SIZE, num_agents // CHART_SIZE_DIVISOR)


@dataclass(frozen=True)
class CycleConfig:
    """計測サイクル設定（chart_size 省略時は max(20, M // 50)）"""
    num_agents: int = 10
    chart_size: Optional[int] = None
    min_length: float = MIN_LENGTH_SECONDS
    cutoff: float = CUTOFF_SECONDS
    tests_per_ma_per_cycle: int = TESTS_PER_MA_PER_CYCLE
    duration_edges: tuple[float, ...] = DURATION_CLASS_EDGES
    bitrate_edges: tuple[float, ...] = BITRATE_CLASS_EDGES
    burstiness_edges: tuple[float, ...] = BURSTINESS_CLASS_EDGES
    seed: int = 0
    cycles: int = 1
    start_date: str = CYCLE_START_DATE
    workers: int = 1
    initial_buffer: float = INITIAL_BUFFER_SECONDS
    rebuffer_target: Optional[float] = None
    link_kbps_min: float = LINK_KBPS_RANGE[0]
    link_kbps_max: float = LINK_KBPS_RANGE[1]
    resolution: str = "360p"
    zipf_s: float = ZIPF_EXPONENT
    busy_agents: tuple[int, ...] = field(default=())

    def __post_init__(self):
        if self.chart_size is None:
            object.__setattr__(self, "chart_size", default_chart_size(self.num_agents))
        self.validate()

    def validate(self):
        """
        設定の整合性を検査

        Raises:
            ConfigError: MINLENGTH >= CUTOFF など、サイクルを実行できない設定
        """
        if self.num_agents < 1:
            raise ConfigError(f"num_agents は1以上である必要があります: {self.num_agents}")
        if self.chart_size < 1:
            raise ConfigError(f"chart_size は1以上である必要があります: {self.chart_size}")
        if self.cutoff <= 0:
            raise ConfigError(f"cutoff は正の値である必要があります: {self.cutoff}")
        if self.min_length >= self.cutoff:
            raise ConfigError(f"MINLENGTH は CUTOFF より小さい必要があります: {self.min_length} >= {self.cutoff}")
        if self.tests_per_ma_per_cycle < 1:
            raise ConfigError(f"tests_per_ma_per_cycle は1以上である必要があります: {self.tests_per_ma_per_cycle}")
        if self.cycles < 1 or self.workers < 1:
            raise ConfigError("cycles と workers は1以上である必要があります")
        if not 0 < self.link_kbps_min <= self.link_kbps_max:
            raise ConfigError(f"リンク帯域の範囲が不正です: {self.link_kbps_min}..{self.link_kbps_max}")
        if self.initial_buffer < 0 or (self.rebuffer_target is not None and self.rebuffer_target < 0):
            raise ConfigError("initial_buffer と rebuffer_target は0以上である必要があります")
        if self.zipf_s < 0:
            raise ConfigError(f"zipf_s は0以上である必要があります: {self.zipf_s}")
        try:
            ClassThresholds(self.duration_edges, self.bitrate_edges, self.burstiness_edges)
            self.start_datetime
        except (ValueError, OverflowError) as e:
            raise ConfigError(str(e)) from e
        if self.chart_size >= self.num_agents:
            logger.warning(f"N({self.chart_size}) は M({self.num_agents}) より十分小さいことが望ましいです")

    @property
    def thresholds(self) -> ClassThresholds:
        return ClassThresholds(self.duration_edges, self.bitrate_edges, self.burstiness_edges)

    @property
    def start_datetime(self) -> datetime:
        return date_parser.isoparse(self.start_date)

    def cycle_start(self, cycle: int) -> datetime:
        """サイクル番号の開始日時（週1回）"""
        return self.start_datetime + relativedelta(weeks=cycle)

    def with_overrides(self, **overrides) -> "CycleConfig":
        """指定フィールドだけ差し替えた設定（None は無視）"""
        values = {k: v for k, v in overrides.items() if v is not None}
        if "num_agents" in values and "chart_size" not in values:
            values["chart_size"] = None
        return replace(self, **values)

    def as_dict(self) -> dict:
        """レポートへのエコー用"""
        return {f.name: getattr(self, f.name) for f in fields(self)}


_TUPLE_FIELDS = {"duration_edges", "bitrate_edges", "burstiness_edges", "busy_agents"}
_INT_FIELDS = {"num_agents", "chart_size", "tests_per_ma_per_cycle", "seed", "cycles", "workers"}
_FLOAT_FIELDS = {"min_length", "cutoff", "initial_buffer", "rebuffer_target", "link_kbps_min",
                 "link_kbps_max", "zipf_s"}


def _convert(key: str, raw: str):
    text = raw.strip()
    if key in _TUPLE_FIELDS:
        parts = [p.strip() for p in text.split(",") if p.strip()]
        if key == "busy_agents":
            return tuple(int(p) for p in parts)
        return tuple(float(p) for p in parts)
    if key in _INT_FIELDS:
        return int(text)
    if key in _FLOAT_FIELDS:
        value = float(text)
        if not math.isfinite(value):
            raise ValueError(f"有限値ではありません: {text}")
        return value
    return text


def load_cycle_config(filepath: Path, **overrides) -> CycleConfig:
    """
    設定ファイルから CycleConfig を読み込む

    Args:
        filepath: KEY=VALUE 形式のファイル（キーは CycleConfig のフィールド名）
        overrides: ファイルより優先する値（CLI引数用、None は無視）

    Returns:
        CycleConfig: 検証済みの設定

    Raises:
        ConfigError: 未知のキー、値の形式不正、整合性違反
    """
    filepath = Path(filepath)
    if not filepath.exists():
        raise ConfigError(f"設定ファイルが見つかりません: {filepath}")
    known = {f.name for f in fields(CycleConfig)}
    values = {}
    for key, raw in dotenv_values(filepath).items():
        if key not in known:
            raise ConfigError(f"未知の設定キーです: {key}")
        if raw is None or raw.strip() == "":
            continue
        try:
            values[key] = _convert(key, raw)
        except ValueError as e:
            raise ConfigError(f"{key} の値が不正です: {raw!r} ({e})") from e
    values.update({k: v for k, v in overrides.items() if v is not None})
    logger.info(f"サイクル設定を読み込みました: {filepath}")
    return CycleConfig(**values)
