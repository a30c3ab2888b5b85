"""
計測エージェント（MA）
コントローラからの指示を受けて動画をテストし、結果をコレクタへ送る

指示は2種類:
  1. チャートを取得してランダムに1本テスト（CollectChartsInstruction）
  2. 指定された動画をテスト（TestVideoInstruction）
"""
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from measurement.chart_service import DEFAULT_LOCATION, ChartService
from measurement.repository import Collector
from playout.playout_sim import LinkModel, PlayerConfig, simulate_download
from playout.verdict import ClassThresholds, TestRecord, verdict
from synth.corpus_synth import SyntheticVideo
from traces.trace_core import trace_stats, truncate
from utils.errors import NoEligibleVideos, VideoNotFound
from utils.logger import get_logger

logger = get_logger(__name__)

COLLECT_CHARTS = 1
TEST_VIDEO = 2


@dataclass(frozen=True)
class CollectChartsInstruction:
    """指示1: 上位 chart_size 件のチャートから MINLENGTH 以上の動画を1本選んでテスト"""
    cycle: int
    chart_size: int
    min_length: float
    scheduled_at: str = ""


@dataclass(frozen=True)
class TestVideoInstruction:
    """指示2: 指定動画のテスト"""
    __test__ = False

    cycle: int
    video_id: str
    scheduled_at: str = ""


Instruction = Union[CollectChartsInstruction, TestVideoInstruction]


@dataclass
class TestContext:
    """指示の実行に必要な共有資源（読み取り専用、collector だけが書き込む）"""
    __test__ = False

    videos: dict
    chart_service: ChartService
    collector: Collector
    player: PlayerConfig
    thresholds: ClassThresholds
    resolution: str = "360p"
    seed: int = 0


@dataclass
class MeasurementAgent:
    """計測エージェント（アイドルでない間は指示を実行しない）"""
    ma_id: int
    link: LinkModel
    location: str = DEFAULT_LOCATION
    idle: bool = True
    sequence: int = 0

    def next_sequence(self) -> int:
        value = self.sequence
        self.sequence += 1
        return value


def select_videos(charts: list, n: int, min_length: float) -> list:
    """
    チャートの上位 n 件から MINLENGTH 未満の動画を除いたもの（順序は保つ）

    Raises:
        NoEligibleVideos: 残る動画が無い
    """
    eligible = [video for video in charts[:n] if video.duration >= min_length]
    if not eligible:
        raise NoEligibleVideos(f"MINLENGTH {min_length:.1f}s 以上の動画がチャート上位{n}件にありません")
    return eligible


def _choice_rng(seed: int, cycle: int, ma_id: int, sequence: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(cycle), int(ma_id), int(sequence)]))


def measure_video(agent: MeasurementAgent, video: SyntheticVideo, context: TestContext, instruction: int,
                  cycle: int, scheduled_at: str = "") -> TestRecord:
    """動画1本をシミュレーションでテストし、結果をコレクタへ送る"""
    rendition = video.renditions.get(context.resolution)
    if rendition is None or not rendition.available or rendition.trace is None:
        raise VideoNotFound(f"{context.resolution} のトレースがありません: {video.video_id}")
    result = simulate_download(rendition.trace, agent.link, context.player)
    record = verdict(
        result,
        trace_stats(truncate(rendition.trace, context.player.cutoff)),
        thresholds=context.thresholds,
        video_id=video.video_id,
        video_duration=video.duration,
        ma_id=agent.ma_id,
        sequence=agent.next_sequence(),
        cycle=cycle,
        instruction=instruction,
        resolution=context.resolution,
        link_kbps=agent.link.capacity_kbps,
        scheduled_at=scheduled_at,
    )
    context.collector.submit(record)
    return record


def run_instruction(agent: MeasurementAgent, instruction: Instruction, context: TestContext) -> Optional[TestRecord]:
    """
    指示を実行

    Args:
        agent: 計測エージェント
        instruction: 指示1または指示2
        context: 共有資源

    Returns:
        TestRecord: 結果（アイドルでないエージェントは実行せず None）

    Raises:
        NoEligibleVideos: 指示1でテストできる動画が無い
        VideoNotFound: 指示2の動画IDがコーパスに無い
    """
    if not agent.idle:
        logger.info(f"MA{agent.ma_id} はアイドルでないため指示を見送ります")
        return None

    if isinstance(instruction, CollectChartsInstruction):
        charts = context.chart_service.charts(agent.location, instruction.cycle, instruction.chart_size)
        eligible = select_videos(charts, instruction.chart_size, instruction.min_length)
        rng = _choice_rng(context.seed, instruction.cycle, agent.ma_id, agent.sequence)
        video = eligible[int(rng.integers(len(eligible)))]
        logger.debug(f"MA{agent.ma_id}: チャート{len(charts)}件から {video.video_id} を選びました")
        return measure_video(agent, video, context, COLLECT_CHARTS, instruction.cycle, instruction.scheduled_at)

    if isinstance(instruction, TestVideoInstruction):
        video = context.videos.get(instruction.video_id)
        if video is None:
            raise VideoNotFound(f"動画が見つかりません: {instruction.video_id}")
        return measure_video(agent, video, context, TEST_VIDEO, instruction.cycle, instruction.scheduled_at)

    raise TypeError(f"未知の指示です: {instruction!r}")
