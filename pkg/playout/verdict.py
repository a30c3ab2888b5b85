"""
計測結果の判定モジュール
再生シミュレーション結果にトレース統計を添えて TestRecord にまとめ、分類バケットを付ける
"""
from bisect import bisect_right
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

from config.constants import BITRATE_CLASS_EDGES, BURSTINESS_CLASS_EDGES, DURATION_CLASS_EDGES
from playout.playout_sim import PlayoutResult
from traces.trace_core import TraceStats
from utils.errors import InvalidParameterError, ZeroMeanTrace

NO_STALL = "no-stall"
STALL = "stall"


@dataclass(frozen=True)
class ClassThresholds:
    """分類の境界値（長さ: 秒, ビットレート: kbps, バースト性: 比）"""
    duration_edges: tuple[float, ...] = DURATION_CLASS_EDGES
    bitrate_edges: tuple[float, ...] = BITRATE_CLASS_EDGES
    burstiness_edges: tuple[float, ...] = BURSTINESS_CLASS_EDGES

    def __post_init__(self):
        for name in ("duration_edges", "bitrate_edges", "burstiness_edges"):
            edges = tuple(float(e) for e in getattr(self, name))
            if any(b <= a for a, b in zip(edges, edges[1:])):
                raise InvalidParameterError(f"{name} は狭義単調増加である必要があります: {edges}")
            object.__setattr__(self, name, edges)


def classify(value: float, edges: Sequence[float]) -> int:
    """境界値以上になった数をクラス番号とする（edges=(72,180) なら 60→0, 72→1, 200→2）"""
    return bisect_right(list(edges), value)


@dataclass(frozen=True)
class TestRecord:
    """1回の計測テストの記録"""
    __test__ = False

    video_id: str
    ma_id: int
    sequence: int
    cycle: int
    instruction: int
    resolution: str
    video_duration: float
    mean_kbps: float
    burstiness: float
    link_kbps: Optional[float]
    startup_delay: Optional[float]
    stall_count: int
    total_stall: float
    completed: bool
    all_frames_on_time: bool
    timed_out: bool
    media_duration: float
    cutoff: float
    duration_class: int
    bitrate_class: int
    burstiness_class: int
    stall_flag: str
    scheduled_at: str = ""

    @property
    def bucket(self) -> tuple[int, int, int, str]:
        """(長さクラス, ビットレートクラス, バースト性クラス, 停止フラグ)"""
        return (self.duration_class, self.bitrate_class, self.burstiness_class, self.stall_flag)

    def as_record(self) -> dict:
        return asdict(self)


def verdict(result: PlayoutResult, media_stats: TraceStats, thresholds: Optional[ClassThresholds] = None,
            video_id: str = "", video_duration: Optional[float] = None, ma_id: int = 0, sequence: int = 0,
            cycle: int = 0, instruction: int = 0, resolution: str = "", link_kbps: Optional[float] = None,
            scheduled_at: str = "") -> TestRecord:
    """
    シミュレーション結果と統計から TestRecord を作る

    Args:
        result: simulate_download の結果
        media_stats: テストで取得した範囲（カットオフで切り詰めたメディア）の統計
        thresholds: 分類境界
        video_duration: 動画の長さ（Noneの場合は media_stats.duration）

    Returns:
        TestRecord: 停止回数・時間は結果をそのまま記録する

    Raises:
        ZeroMeanTrace: 平均0でバースト性が定義できない
    """
    if media_stats.burstiness is None:
        raise ZeroMeanTrace(f"平均0のトレースはバースト性を定義できません: {video_id}")
    thresholds = thresholds or ClassThresholds()
    duration = media_stats.duration if video_duration is None else video_duration
    return TestRecord(
        video_id=video_id,
        ma_id=ma_id,
        sequence=sequence,
        cycle=cycle,
        instruction=instruction,
        resolution=resolution,
        video_duration=duration,
        mean_kbps=media_stats.mean_kbps,
        burstiness=media_stats.burstiness,
        link_kbps=link_kbps,
        startup_delay=result.startup_delay,
        stall_count=result.stall_count,
        total_stall=result.total_stall,
        completed=result.completed,
        all_frames_on_time=result.all_frames_on_time,
        timed_out=result.timed_out,
        media_duration=result.media_duration,
        cutoff=result.cutoff,
        duration_class=classify(duration, thresholds.duration_edges),
        bitrate_class=classify(media_stats.mean_kbps, thresholds.bitrate_edges),
        burstiness_class=classify(media_stats.burstiness, thresholds.burstiness_edges),
        stall_flag=NO_STALL if result.stall_count == 0 else STALL,
        scheduled_at=scheduled_at,
    )
