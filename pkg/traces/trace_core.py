"""
トレース基盤モジュール
フレームログとビットレートトレースのドメイン型、および派生指標
（平均ビットレート・バースト性・相関・カットオフ）

単位はトレース側ですべて kbps。バイトはフレームログの中だけで扱う。
"""
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Union

import numpy as np

from config.constants import PARTIAL_INTERVAL_THRESHOLD, TRACE_INTERVAL
from traces.itag import ItagDescriptor, lookup_itag
from utils.errors import (
    EmptyLog,
    EmptyTrace,
    InvalidParameterError,
    LengthMismatch,
    MalformedLog,
    UndefinedCorrelation,
)
from utils.logger import get_logger

logger = get_logger(__name__)

# 宣言された長さに対する最終ptsの許容はみ出し（秒）
DECLARED_DURATION_SLACK = 1.0

# 浮動小数点の丸めで区間境界がずれないための許容
_BOUNDARY_EPS = 1e-9


@dataclass(frozen=True)
class Frame:
    """映像フレーム1枚（pts: 秒, size: バイト）"""
    pts: float
    size: int
    is_key: Optional[bool] = None


@dataclass(frozen=True)
class FrameLog:
    """1ストリーム分のフレームログ"""
    video_id: str
    itag: ItagDescriptor
    frames: tuple[Frame, ...] = ()
    declared_duration: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "frames", tuple(self.frames))
        previous = 0.0
        for i, frame in enumerate(self.frames):
            if not math.isfinite(frame.pts) or frame.pts < 0:
                raise MalformedLog(f"フレーム{i}: ptsが不正です ({frame.pts})")
            if frame.size < 0:
                raise MalformedLog(f"フレーム{i}: サイズが負です ({frame.size})")
            if frame.pts < previous:
                raise MalformedLog(f"フレーム{i}: ptsが逆行しています ({previous} -> {frame.pts})")
            previous = frame.pts
        if self.declared_duration is not None:
            if self.declared_duration < 0:
                raise MalformedLog(f"宣言された長さが負です ({self.declared_duration})")
            if self.frames and self.frames[-1].pts > self.declared_duration + DECLARED_DURATION_SLACK:
                raise MalformedLog(
                    f"最終ptsが宣言された長さを超えています ({self.frames[-1].pts} > {self.declared_duration})"
                )

    @property
    def total_bytes(self) -> int:
        return sum(frame.size for frame in self.frames)

    @property
    def last_pts(self) -> float:
        if not self.frames:
            raise EmptyLog(f"フレームログが空です: {self.video_id}")
        return self.frames[-1].pts

    def __len__(self) -> int:
        return len(self.frames)


@dataclass(frozen=True)
class BitrateTrace:
    """区間ごとの瞬時ビットレート（kbps）"""
    interval: float = TRACE_INTERVAL
    values: tuple[float, ...] = ()
    source_duration: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        if self.interval <= 0:
            raise InvalidParameterError(f"intervalは正の値である必要があります: {self.interval}")
        if any(v < 0 or not math.isfinite(v) for v in self.values):
            raise InvalidParameterError("ビットレートは0以上の有限値である必要があります")

    @classmethod
    def from_values(cls, values: Sequence[float], interval: float = TRACE_INTERVAL,
                    source_duration: Optional[float] = None) -> "BitrateTrace":
        """値の列からトレースを作る（source_duration 省略時は 区間数 × interval）"""
        values = tuple(float(v) for v in values)
        if source_duration is None:
            source_duration = len(values) * interval
        return cls(interval=interval, values=values, source_duration=source_duration)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)

    @property
    def mean_kbps(self) -> float:
        if not self.values:
            raise EmptyTrace("トレースが空です")
        return float(np.mean(self.as_array()))

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class TraceStats:
    """トレースの要約統計（burstiness は平均0のとき None）"""
    mean_kbps: float
    stddev_kbps: float
    burstiness: Optional[float]
    duration: float
    samples: int = field(default=0)

    @property
    def burstiness_defined(self) -> bool:
        return self.burstiness is not None


def bin_frames(log: FrameLog, interval: float = TRACE_INTERVAL) -> BitrateTrace:
    """
    フレームログを一定区間ごとの瞬時ビットレートに集計

    フレームは floor(pts/interval) のバケットに入る（境界上のフレームは後ろのバケット）。
    最終フレームより後ろの空バケットは出力しない。

    Args:
        log: フレームログ
        interval: 集計区間（秒）

    Returns:
        BitrateTrace: kbps のトレース
    """
    if interval <= 0:
        raise InvalidParameterError(f"intervalは正の値である必要があります: {interval}")
    if not log.frames:
        raise EmptyLog(f"フレームログが空です: {log.video_id}")

    pts = np.fromiter((f.pts for f in log.frames), dtype=float, count=len(log.frames))
    sizes = np.fromiter((f.size for f in log.frames), dtype=float, count=len(log.frames))
    if np.any(pts < 0):
        raise MalformedLog(f"負のptsが含まれています: {log.video_id}")

    buckets = np.floor(pts / interval + _BOUNDARY_EPS).astype(np.int64)
    count = int(buckets[-1]) + 1
    byte_sums = np.bincount(buckets, weights=sizes, minlength=count)
    values = byte_sums * 8.0 / 1000.0 / interval

    source_duration = float(pts[-1])
    if log.declared_duration is not None:
        source_duration = max(source_duration, float(log.declared_duration))

    logger.debug(f"bin_frames: {log.video_id} frames={len(log.frames)} buckets={count}")
    return BitrateTrace(interval=interval, values=tuple(values.tolist()), source_duration=source_duration)


def _stats_values(trace: BitrateTrace, partial_threshold: float) -> np.ndarray:
    """統計に使う値（末尾の短い部分区間を除外）"""
    values = trace.as_array()
    if len(values) < 2:
        return values
    covered = trace.source_duration - (len(values) - 1) * trace.interval
    if covered < partial_threshold * trace.interval:
        return values[:-1]
    return values


def trace_stats(trace: BitrateTrace, partial_threshold: float = PARTIAL_INTERVAL_THRESHOLD) -> TraceStats:
    """
    トレースの平均・母標準偏差・バースト性（相対標準偏差）を計算

    Args:
        trace: ビットレートトレース
        partial_threshold: 末尾区間の実長がこの割合未満なら統計から除外する

    Returns:
        TraceStats: 平均0のとき burstiness は None
    """
    if not trace.values:
        raise EmptyTrace("トレースが空です")
    values = _stats_values(trace, partial_threshold)
    mean = float(np.mean(values))
    stddev = float(np.std(values))
    burstiness = stddev / mean if mean > 0 else None
    return TraceStats(
        mean_kbps=mean,
        stddev_kbps=stddev,
        burstiness=burstiness,
        duration=trace.source_duration,
        samples=len(values),
    )


def truncate(trace: BitrateTrace, cutoff: float) -> BitrateTrace:
    """
    トレースを先頭 cutoff 秒に切り詰める

    [0, cutoff) に一部でもかかる区間を残す。cutoff より短いトレースはそのまま返す。
    """
    if cutoff <= 0:
        raise InvalidParameterError(f"cutoffは正の値である必要があります: {cutoff}")
    keep = math.ceil(cutoff / trace.interval - _BOUNDARY_EPS)
    if trace.source_duration <= cutoff and len(trace.values) <= keep:
        return trace
    return BitrateTrace(
        interval=trace.interval,
        values=trace.values[:keep],
        source_duration=min(trace.source_duration, cutoff),
    )


def pearson(a: BitrateTrace, b: BitrateTrace) -> float:
    """
    2つのトレースのピアソン積率相関係数

    Raises:
        LengthMismatch: 長さが異なる、または2未満
        UndefinedCorrelation: どちらかが定数
    """
    if len(a) != len(b):
        raise LengthMismatch(f"トレース長が一致しません: {len(a)} != {len(b)}")
    if len(a) < 2:
        raise LengthMismatch(f"相関には2点以上必要です: {len(a)}")
    x = a.as_array() - np.mean(a.as_array())
    y = b.as_array() - np.mean(b.as_array())
    sxx = float(np.dot(x, x))
    syy = float(np.dot(y, y))
    if sxx == 0.0 or syy == 0.0:
        raise UndefinedCorrelation("定数トレースとの相関は定義できません")
    r = float(np.dot(x, y)) / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r))


def average_bitrate(log: FrameLog) -> float:
    """フレームサイズの合計を長さで割った平均ビットレート（kbps）"""
    if not log.frames:
        raise EmptyLog(f"フレームログが空です: {log.video_id}")
    duration = max(log.last_pts, log.declared_duration or 0.0)
    if duration <= 0:
        raise InvalidParameterError("長さ0のフレームログでは平均ビットレートを計算できません")
    return log.total_bytes * 8.0 / 1000.0 / duration


def mean_bitrate_from_size(size_mb: float, duration: float) -> float:
    """ファイルサイズ（MB = 10^6 バイト）と長さ（秒）から平均ビットレート（kbps）"""
    if duration <= 0:
        raise InvalidParameterError(f"durationは正の値である必要があります: {duration}")
    return size_mb * 8.0 * 1000.0 / duration


def trace_to_framelog(trace: BitrateTrace, video_id: str, itag: Union[ItagDescriptor, int] = 134) -> FrameLog:
    """
    トレースを1区間1フレームのフレームログに変換（コーパス出力用）

    サイズは累積値を丸めて差分を取るので、合計バイト数の誤差は1バイト未満に収まる。
    """
    if isinstance(itag, int):
        itag = lookup_itag(itag)
    cumulative = np.round(np.cumsum(trace.as_array()) * trace.interval * 1000.0 / 8.0)
    sizes = np.diff(np.concatenate(([0.0], cumulative))).astype(np.int64)
    frames = tuple(
        Frame(pts=round(i * trace.interval, 9), size=int(size))
        for i, size in enumerate(sizes)
    )
    return FrameLog(video_id=video_id, itag=itag, frames=frames, declared_duration=trace.source_duration)


def with_values(trace: BitrateTrace, values: Sequence[float]) -> BitrateTrace:
    """同じ区間・長さのまま値だけ差し替えたトレース"""
    return replace(trace, values=tuple(float(v) for v in values))


@dataclass(frozen=True)
class CutoffComparison:
    """全体と先頭カットオフ区間の比較"""
    full: TraceStats
    head: TraceStats
    mean_relative_diff: float
    burstiness_diff: Optional[float]


def cutoff_comparison(trace: BitrateTrace, cutoff: float) -> CutoffComparison:
    """動画全体と先頭 cutoff 秒の平均ビットレート・バースト性を比較"""
    full = trace_stats(trace)
    head = trace_stats(truncate(trace, cutoff))
    mean_diff = abs(head.mean_kbps - full.mean_kbps) / full.mean_kbps if full.mean_kbps > 0 else 0.0
    burst_diff = None
    if full.burstiness is not None and head.burstiness is not None:
        burst_diff = abs(head.burstiness - full.burstiness)
    return CutoffComparison(full=full, head=head, mean_relative_diff=mean_diff, burstiness_diff=burst_diff)
