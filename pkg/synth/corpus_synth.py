"""
合成コーパス生成モジュール
実測分布（長さ・ファイルサイズの対数正規フィット、解像度ごとの可用性）に合わせて
動画の母集団とビットレートトレースを生成する

乱数は (seed, index) から動画ごとに派生させるので、並列生成しても直列生成と同じ結果になる。
"""
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import optimize, signal
from tqdm import tqdm

from analysis.distfit import LognormalFit
from config.constants import (
    AR_COEFFICIENT,
    BITRATE_BOUNDS_KBPS,
    BURSTINESS_FIT,
    CORRELATION_FLOOR,
    DASH_BITRATE_DELTA,
    DASH_SUBSEGMENT_SECONDS,
    FILE_SIZE_FITS,
    RESOLUTION_AVAILABILITY,
    RESOLUTION_NOISE_SD,
    SEGMENT_SPIKE_FACTOR,
    SIZE_DURATION_CORRELATION,
    TRACE_INTERVAL,
    VIDEO_CATEGORIES,
    VIDEO_LENGTH_FIT,
    WEBM_SIZE_NOISE_SD,
    WEBM_SIZE_SLOPE,
)
from traces.itag import KNOWN_RESOLUTIONS
from traces.trace_core import BitrateTrace, mean_bitrate_from_size, pearson
from utils.errors import InvalidParameterError, ProfileError, UndefinedCorrelation
from utils.logger import get_logger

logger = get_logger(__name__)

BASE_RESOLUTION = "360p"
CONTAINERS = ("mp4", "webm")

# サイズの再抽選回数（超えたらビットレート範囲に収まるよう切り詰める）
MAX_REDRAWS = 64
# 解像度間ノイズを半減させる最大回数
MAX_NOISE_HALVINGS = 8
# バースト性の探索上限（対数空間の標準偏差）
MAX_LOG_SIGMA = 20.0


@dataclass(frozen=True)
class PopulationProfile:
    """合成コーパスの母集団プロファイル"""
    length_fit: LognormalFit = field(default_factory=lambda: LognormalFit(*VIDEO_LENGTH_FIT))
    size_fits: dict = field(default_factory=lambda: {
        key: LognormalFit(*value) for key, value in FILE_SIZE_FITS.items()
    })
    availability: dict = field(default_factory=lambda: dict(RESOLUTION_AVAILABILITY))
    webm_size_slope: float = WEBM_SIZE_SLOPE
    webm_size_noise: float = WEBM_SIZE_NOISE_SD
    dash_bitrate_delta: float = DASH_BITRATE_DELTA
    subsegment: float = DASH_SUBSEGMENT_SECONDS
    correlation_floor: float = CORRELATION_FLOOR
    size_duration_correlation: float = SIZE_DURATION_CORRELATION
    bitrate_bounds: tuple[float, float] = BITRATE_BOUNDS_KBPS
    burstiness_fit: LognormalFit = field(default_factory=lambda: LognormalFit(*BURSTINESS_FIT))
    resolution_noise: float = RESOLUTION_NOISE_SD
    ar_coefficient: float = AR_COEFFICIENT
    spike_factor: float = SEGMENT_SPIKE_FACTOR
    category_weights: dict = field(default_factory=lambda: {label: 1.0 for label in VIDEO_CATEGORIES})
    interval: float = TRACE_INTERVAL

    def __post_init__(self):
        self.validate()

    @property
    def resolutions(self) -> tuple[str, ...]:
        """可用性が定義された解像度（低い順）"""
        return tuple(sorted(self.availability, key=_resolution_height))

    def validate(self):
        """
        プロファイルの整合性を検査

        Raises:
            ProfileError: 未知の解像度キー、確率の範囲外など
        """
        for resolution, probability in self.availability.items():
            if resolution not in KNOWN_RESOLUTIONS:
                raise ProfileError(f"未知の解像度です: {resolution}")
            if not 0.0 <= probability <= 1.0:
                raise ProfileError(f"可用性は [0, 1] の範囲である必要があります: {resolution}={probability}")
            if (resolution, "mp4") not in self.size_fits:
                raise ProfileError(f"ファイルサイズのフィットがありません: {resolution}/mp4")
        for resolution, container in self.size_fits:
            if resolution not in KNOWN_RESOLUTIONS or container not in CONTAINERS:
                raise ProfileError(f"未知のサイズフィットキーです: {resolution}/{container}")
        if BASE_RESOLUTION not in self.availability:
            raise ProfileError(f"{BASE_RESOLUTION} の可用性が定義されていません")
        base = self.availability[BASE_RESOLUTION]
        if any(p > base for p in self.availability.values()):
            raise ProfileError(f"{BASE_RESOLUTION} の可用性は他の解像度以上である必要があります")
        if not -1.0 <= self.size_duration_correlation <= 1.0:
            raise ProfileError(f"size_duration_correlation が範囲外です: {self.size_duration_correlation}")
        if not 0.0 <= self.correlation_floor <= 1.0:
            raise ProfileError(f"correlation_floor が範囲外です: {self.correlation_floor}")
        if not 0.0 <= self.ar_coefficient < 1.0:
            raise ProfileError(f"ar_coefficient は [0, 1) の範囲である必要があります: {self.ar_coefficient}")
        low, high = self.bitrate_bounds
        if not 0 < low < high:
            raise ProfileError(f"ビットレート範囲が不正です: {self.bitrate_bounds}")
        if self.webm_size_slope <= 0 or self.subsegment <= 0 or self.interval <= 0:
            raise ProfileError("webm_size_slope / subsegment / interval は正の値である必要があります")
        if self.webm_size_noise < 0 or self.resolution_noise < 0 or self.spike_factor < 1.0:
            raise ProfileError("ノイズは0以上、spike_factor は1以上である必要があります")
        if not self.category_weights or any(w < 0 for w in self.category_weights.values()) \
                or sum(self.category_weights.values()) <= 0:
            raise ProfileError("カテゴリの重みが不正です")


@dataclass(frozen=True)
class Rendition:
    """1解像度分の情報（利用できない解像度はサイズ等が None）"""
    resolution: str
    available: bool
    mp4_size_mb: Optional[float] = None
    webm_size_mb: Optional[float] = None
    mean_kbps: Optional[float] = None
    dash_mean_kbps: Optional[float] = None
    trace: Optional[BitrateTrace] = None


@dataclass(frozen=True)
class SyntheticVideo:
    """合成動画1本"""
    video_id: str
    duration: float
    category: str
    burstiness: float
    renditions: dict

    def rendition(self, resolution: str) -> Rendition:
        try:
            return self.renditions[resolution]
        except KeyError as e:
            raise ProfileError(f"未知の解像度です: {resolution}") from e

    @property
    def available_resolutions(self) -> tuple[str, ...]:
        return tuple(r for r, rendition in self.renditions.items() if rendition.available)

    def to_metadata(self) -> dict:
        """JSONメタデータ（トレース本体は含まない）"""
        return {
            "video_id": self.video_id,
            "duration": self.duration,
            "category": self.category,
            "burstiness": self.burstiness,
            "renditions": {
                resolution: {
                    "available": r.available,
                    "mp4_size_mb": r.mp4_size_mb,
                    "webm_size_mb": r.webm_size_mb,
                    "mean_kbps": r.mean_kbps,
                    "dash_mean_kbps": r.dash_mean_kbps,
                }
                for resolution, r in self.renditions.items()
            },
        }


def _resolution_height(label: str) -> int:
    return int(label[:-1]) if label.endswith("p") and label[:-1].isdigit() else 0


def video_rng(seed: int, index: int) -> np.random.Generator:
    """動画ごとの乱数生成器（(seed, index) から派生）"""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(index)]))


def _spike_pattern(n: int, interval: float, subsegment: float) -> np.ndarray:
    """サブセグメントの先頭区間を示すマスク"""
    starts = np.arange(n) * interval
    return np.mod(starts + 1e-9, subsegment) < interval


def _relative_std(values: np.ndarray) -> float:
    mean = float(np.mean(values))
    return float(np.std(values)) / mean if mean > 0 else 0.0


def synth_trace(duration: float, mean_kbps: float, burstiness: float,
                subsegment: float = DASH_SUBSEGMENT_SECONDS, seed=0,
                interval: float = TRACE_INTERVAL, ar_coefficient: float = AR_COEFFICIENT,
                spike_factor: float = SEGMENT_SPIKE_FACTOR) -> BitrateTrace:
    """
    AR(1) 乗法過程とサブセグメント境界のスパイクで合成トレースを作る

    log 空間の AR(1) 系列 z に対して値は spike * exp(s*z - s^2/2)。s は経験的な相対標準偏差が
    burstiness と一致するよう根探索で決め、最後に平均をちょうど mean_kbps に合わせる。
    スパイクだけで burstiness を超える場合はスパイクの振幅を下げる。

    Args:
        duration: 長さ（秒）
        mean_kbps: 平均ビットレート
        burstiness: 目標の相対標準偏差（0なら定数トレース）
        subsegment: サブセグメント長（秒）
        seed: 整数シード、または numpy の Generator
        interval: 区間（秒）

    Returns:
        BitrateTrace: 合成トレース
    """
    if duration <= 0 or mean_kbps <= 0:
        raise InvalidParameterError(f"duration と mean_kbps は正の値である必要があります: {duration}, {mean_kbps}")
    if burstiness < 0:
        raise InvalidParameterError(f"burstiness は0以上である必要があります: {burstiness}")
    if subsegment <= 0 or interval <= 0:
        raise InvalidParameterError("subsegment と interval は正の値である必要があります")

    n = max(1, math.ceil(duration / interval - 1e-9))
    if burstiness == 0 or n < 2:
        return BitrateTrace(interval=interval, values=(float(mean_kbps),) * n, source_duration=float(duration))

    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    phi = ar_coefficient
    innovations = rng.standard_normal(n)
    initial = rng.standard_normal()
    z, _ = signal.lfilter([math.sqrt(1.0 - phi ** 2)], [1.0, -phi], innovations, zi=[phi * initial])

    mask = _spike_pattern(n, interval, subsegment)
    fraction = float(np.mean(mask))
    spikes = np.where(mask, spike_factor, 1.0)

    spike_level = _relative_std(spikes)
    if burstiness <= spike_level:
        # スパイクの振幅だけで合わせる（2値分布の相対標準偏差を解く）
        spread = math.sqrt(fraction * (1.0 - fraction))
        amplitude = burstiness / (spread - burstiness * fraction)
        values = np.where(mask, 1.0 + amplitude, 1.0)
    else:
        def excess(sigma: float) -> float:
            return _relative_std(spikes * np.exp(sigma * z - sigma ** 2 / 2.0)) - burstiness

        upper = 0.5
        while excess(upper) < 0 and upper < MAX_LOG_SIGMA:
            upper *= 2.0
        if excess(upper) < 0:
            logger.warning(f"目標のバースト性に届きません: burstiness={burstiness} n={n}")
            sigma = upper
        else:
            sigma = optimize.brentq(excess, 0.0, upper, xtol=1e-10)
        values = spikes * np.exp(sigma * z - sigma ** 2 / 2.0)

    values = np.clip(values * (mean_kbps / float(np.mean(values))), 0.0, None)
    return BitrateTrace(interval=interval, values=tuple(values.tolist()), source_duration=float(duration))


def _draw_size(rng: np.random.Generator, fit: LognormalFit, duration: float, z_duration: float,
               common: float, rho: float, bounds: tuple[float, float]) -> float:
    """
    長さと相関したファイルサイズ（MB）を引く

    ln(size) と ln(duration) を相関 rho の2変量正規で結ぶので、サイズの周辺分布は fit のまま。
    暗黙のビットレートが範囲外なら独立成分だけ引き直す。
    """
    low, high = bounds
    own_weight = math.sqrt(1.0 - rho ** 2)
    size_mb = 0.0
    for _ in range(MAX_REDRAWS):
        epsilon = math.sqrt(0.5) * common + math.sqrt(0.5) * rng.standard_normal()
        z_size = rho * z_duration + own_weight * epsilon
        size_mb = math.exp(fit.meanlog + fit.sdlog * z_size)
        if low <= mean_bitrate_from_size(size_mb, duration) <= high:
            return size_mb
    kbps = min(max(mean_bitrate_from_size(size_mb, duration), low), high)
    return kbps * duration / 8000.0


def _correlated_traces(base: BitrateTrace, means: dict, profile: PopulationProfile,
                       rng: np.random.Generator) -> dict:
    """
    基準トレースに解像度ごとの独立ノイズを掛け、各解像度の平均に合わせる

    いずれかの組の相関が下限を下回る間はノイズを半分にする。
    """
    base_values = base.as_array()
    noises = {resolution: rng.standard_normal(len(base_values)) for resolution in means}
    constant = np.all(base_values == base_values[0])
    sd = 0.0 if constant or len(base_values) < 2 else profile.resolution_noise

    for _ in range(MAX_NOISE_HALVINGS + 1):
        traces = {}
        for resolution, mean in means.items():
            values = base_values * np.exp(sd * noises[resolution] - sd ** 2 / 2.0)
            values = values * (mean / float(np.mean(values)))
            traces[resolution] = BitrateTrace(interval=base.interval, values=tuple(values.tolist()),
                                              source_duration=base.source_duration)
        if sd == 0.0 or _min_pairwise_correlation(traces) >= profile.correlation_floor:
            return traces
        sd /= 2.0
    return {
        resolution: BitrateTrace(interval=base.interval,
                                 values=tuple((base_values * mean / float(np.mean(base_values))).tolist()),
                                 source_duration=base.source_duration)
        for resolution, mean in means.items()
    }


def _min_pairwise_correlation(traces: dict) -> float:
    items = list(traces.values())
    lowest = 1.0
    for i in range(len(items)):
        for j in range(i + 1, len(items)):
            try:
                lowest = min(lowest, pearson(items[i], items[j]))
            except UndefinedCorrelation:
                continue
    return lowest


def synth_video(index: int, profile: Optional[PopulationProfile] = None, seed: int = 0,
                with_traces: bool = True) -> SyntheticVideo:
    """
    合成動画を1本生成（(seed, index) だけで決まる）

    Args:
        index: コーパス内の番号
        profile: 母集団プロファイル
        seed: コーパスのシード
        with_traces: Falseの場合はトレースを生成しない（統計だけ使う場合）

    Returns:
        SyntheticVideo: 合成動画
    """
    profile = profile or PopulationProfile()
    rng = video_rng(seed, index)

    z_duration = rng.standard_normal()
    duration = math.exp(profile.length_fit.meanlog + profile.length_fit.sdlog * z_duration)

    labels = list(profile.category_weights)
    weights = np.asarray([profile.category_weights[label] for label in labels], dtype=float)
    category = labels[int(rng.choice(len(labels), p=weights / weights.sum()))]

    burst_fit = profile.burstiness_fit
    burstiness = math.exp(burst_fit.meanlog + burst_fit.sdlog * rng.standard_normal())

    resolutions = profile.resolutions
    draws = rng.random(len(resolutions))
    available = {r: bool(u < profile.availability[r]) for r, u in zip(resolutions, draws)}
    if any(available.values()):
        available[BASE_RESOLUTION] = True

    common = rng.standard_normal()
    renditions = {}
    means = {}
    for resolution in resolutions:
        # 利用できない解像度でも乱数の消費順を固定する
        size_mb = _draw_size(rng, profile.size_fits[(resolution, "mp4")], duration, z_duration, common,
                             profile.size_duration_correlation, profile.bitrate_bounds)
        webm_noise = math.exp(profile.webm_size_noise * rng.standard_normal())
        if not available[resolution]:
            renditions[resolution] = Rendition(resolution=resolution, available=False)
            continue
        mean_kbps = mean_bitrate_from_size(size_mb, duration)
        means[resolution] = mean_kbps
        renditions[resolution] = Rendition(
            resolution=resolution,
            available=True,
            mp4_size_mb=size_mb,
            webm_size_mb=size_mb * profile.webm_size_slope * webm_noise,
            mean_kbps=mean_kbps,
            dash_mean_kbps=mean_kbps * (1.0 + profile.dash_bitrate_delta),
        )

    trace_seed = int(rng.integers(0, 2 ** 63 - 1))
    if with_traces and means:
        trace_rng = np.random.default_rng(trace_seed)
        base = synth_trace(duration, means[BASE_RESOLUTION], burstiness, subsegment=profile.subsegment,
                           seed=trace_rng, interval=profile.interval,
                           ar_coefficient=profile.ar_coefficient, spike_factor=profile.spike_factor)
        traces = _correlated_traces(base, means, profile, trace_rng)
        for resolution, trace in traces.items():
            rendition = renditions[resolution]
            renditions[resolution] = Rendition(
                resolution=rendition.resolution,
                available=True,
                mp4_size_mb=rendition.mp4_size_mb,
                webm_size_mb=rendition.webm_size_mb,
                mean_kbps=rendition.mean_kbps,
                dash_mean_kbps=rendition.dash_mean_kbps,
                trace=trace,
            )

    return SyntheticVideo(
        video_id=f"s{seed}-{index:06d}",
        duration=duration,
        category=category,
        burstiness=burstiness,
        renditions=renditions,
    )


def synth_corpus(n: int, profile: Optional[PopulationProfile] = None, seed: int = 0,
                 with_traces: bool = True, show_progress: bool = False,
                 indices: Optional[Sequence[int]] = None) -> list[SyntheticVideo]:
    """
    合成コーパスを生成

    Args:
        n: 動画数
        profile: 母集団プロファイル（Noneの場合は既定値）
        seed: シード
        with_traces: トレースも生成するか
        show_progress: 進捗バーを表示するか
        indices: 生成する番号の部分集合（並列生成時の分割用、Noneなら 0..n-1）

    Returns:
        list[SyntheticVideo]: 合成動画のリスト
    """
    if n < 1:
        raise InvalidParameterError(f"動画数は1以上である必要があります: {n}")
    profile = profile or PopulationProfile()
    targets = range(n) if indices is None else indices
    logger.info(f"合成コーパスを生成します: n={n} seed={seed} traces={with_traces}")
    videos = [
        synth_video(index, profile=profile, seed=seed, with_traces=with_traces)
        for index in tqdm(targets, desc="synth", disable=not show_progress)
    ]
    logger.info(f"合成コーパスを生成しました: {len(videos)}本")
    return videos
