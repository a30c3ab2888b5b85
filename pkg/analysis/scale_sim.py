"""
解像度スケーリングシミュレーションモジュール
別解像度のトレースを線形スケーリングで推定し、MAPEで誤差を評価する

    B_sim_i = B_orig_i * mean(B_sim) / mean(B_orig)
"""
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from config.constants import CUTOFF_SECONDS
from traces.trace_core import BitrateTrace, pearson, truncate, with_values
from utils.errors import (
    EmptyInput,
    EmptyTrace,
    InvalidParameterError,
    LengthMismatch,
    UndefinedCorrelation,
    ZeroMeanTrace,
)
from utils.logger import get_logger

logger = get_logger(__name__)


@dataclass(frozen=True)
class ScalePair:
    """スケーリング元のトレースと目標平均ビットレート（kbps）"""
    orig: BitrateTrace
    target_mean: float

    def __post_init__(self):
        if not self.orig.values:
            raise EmptyTrace("スケーリング元のトレースが空です")
        if self.orig.mean_kbps <= 0:
            raise ZeroMeanTrace("平均0のトレースはスケーリングできません")
        if self.target_mean <= 0:
            raise InvalidParameterError(f"目標平均は正の値である必要があります: {self.target_mean}")


@dataclass(frozen=True)
class SimulationReport:
    """解像度シミュレーション1件の結果"""
    scaled: BitrateTrace
    mape: float
    pearson: Optional[float]
    n: int
    warnings: tuple[str, ...] = field(default=())

    def as_record(self) -> dict:
        """CLIレポート用のフラットな辞書"""
        return {
            "mape_percent": self.mape,
            "pearson": self.pearson,
            "samples": self.n,
            "warnings": "; ".join(self.warnings),
        }


@dataclass(frozen=True)
class MapeSummary:
    """MAPEの平均と95パーセンタイル"""
    label: str
    mean: float
    p95: float
    n: int


def scale_trace(pair: ScalePair) -> BitrateTrace:
    """トレースを目標平均に線形スケーリング（区間・長さは変えない）"""
    factor = pair.target_mean / pair.orig.mean_kbps
    return with_values(pair.orig, pair.orig.as_array() * factor)


def rescale(trace: BitrateTrace, target_mean: float) -> BitrateTrace:
    """scale_trace の簡易版"""
    return scale_trace(ScalePair(orig=trace, target_mean=target_mean))


def mape(orig: BitrateTrace, sim: BitrateTrace) -> float:
    """
    平均で正規化した平均絶対誤差（%）

        (1/n) * Σ|orig_i - sim_i| / mean(orig) * 100

    Raises:
        LengthMismatch: 長さが異なる
        ZeroMeanTrace: orig の平均が0
    """
    if len(orig) != len(sim):
        raise LengthMismatch(f"トレース長が一致しません: {len(orig)} != {len(sim)}")
    if len(orig) == 0:
        raise EmptyTrace("トレースが空です")
    mean = orig.mean_kbps
    if mean <= 0:
        raise ZeroMeanTrace("平均0のトレースに対してMAPEは定義できません")
    return float(np.mean(np.abs(orig.as_array() - sim.as_array())) / mean * 100.0)


def _prefix(trace: BitrateTrace, n: int) -> BitrateTrace:
    if len(trace) == n:
        return trace
    return BitrateTrace(interval=trace.interval, values=trace.values[:n],
                        source_duration=min(trace.source_duration, n * trace.interval))


def simulate_resolution(orig: BitrateTrace, reference: BitrateTrace,
                        cutoff: float = CUTOFF_SECONDS) -> SimulationReport:
    """
    orig を reference の平均にスケーリングし、reference に対するMAPEと相関を求める

    両トレースは先にカットオフで切り詰め、長さが違えば共通の先頭部分だけを比較する。

    Args:
        orig: 元の解像度のトレース
        reference: 目標解像度で実測したトレース
        cutoff: カットオフ（秒）

    Returns:
        SimulationReport: スケーリング結果・MAPE・ピアソン相関（定義できなければ None）
    """
    if orig.interval != reference.interval:
        raise InvalidParameterError(
            f"トレースの区間が一致しません: {orig.interval} != {reference.interval}"
        )
    warnings = []
    orig = truncate(orig, cutoff)
    reference = truncate(reference, cutoff)
    n = min(len(orig), len(reference))
    if n == 0:
        raise EmptyTrace("比較できる区間がありません")
    if len(orig) != len(reference):
        warnings.append(f"長さが異なるため先頭{n}区間で比較しました ({len(orig)} / {len(reference)})")
        orig = _prefix(orig, n)
        reference = _prefix(reference, n)

    if reference.mean_kbps <= 0:
        raise ZeroMeanTrace("参照トレースの平均が0です")
    scaled = rescale(orig, reference.mean_kbps)
    error = mape(reference, scaled)

    correlation = None
    try:
        correlation = pearson(orig, reference)
    except (UndefinedCorrelation, LengthMismatch) as e:
        warnings.append(f"相関係数を計算できません: {e}")

    for message in warnings:
        logger.warning(message)
    return SimulationReport(scaled=scaled, mape=error, pearson=correlation, n=n, warnings=tuple(warnings))


def summarize_mape(values: Iterable[float], label: str = "") -> MapeSummary:
    """MAPEの平均と95パーセンタイル"""
    array = np.asarray(list(values), dtype=float)
    if array.size == 0:
        raise EmptyInput("MAPEの標本が空です")
    return MapeSummary(label=label, mean=float(np.mean(array)),
                       p95=float(np.percentile(array, 95)), n=int(array.size))


def evaluate_pairs(pairs: Sequence[tuple[BitrateTrace, BitrateTrace]], cutoff: float = CUTOFF_SECONDS,
                   label: str = "") -> tuple[list[SimulationReport], MapeSummary]:
    """
    (元, 参照) のペア群をまとめて評価

    平均0など評価できないペアは警告を出して除外する。
    """
    reports = []
    for index, (orig, reference) in enumerate(pairs):
        try:
            reports.append(simulate_resolution(orig, reference, cutoff=cutoff))
        except (ZeroMeanTrace, EmptyTrace) as e:
            logger.warning(f"ペア{index}をスキップしました: {e}")
    summary = summarize_mape((r.mape for r in reports), label=label)
    logger.info(f"MAPE {label or '(all)'}: mean={summary.mean:.2f}% p95={summary.p95:.2f}% n={summary.n}")
    return reports, summary
