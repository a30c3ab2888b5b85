"""
コントローラ
週1回の計測サイクルを実行する

  1. 全MAに指示1（チャート取得 + ランダムテスト）
  2. 分析: テスト済み動画の分類と MINLENGTH の更新（テスト済み長さの第1四分位数、CUTOFF 以上なら無視）
  3. 分類済みリストを巡回して指示2を割り当て、MAあたり tests_per_ma_per_cycle 件に揃える
"""
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from tqdm import tqdm

from measurement.agent import (
    CollectChartsInstruction,
    Instruction,
    MeasurementAgent,
    TestContext,
    TestVideoInstruction,
    run_instruction,
)
from measurement.chart_service import ChartService
from measurement.cycle_config import CycleConfig
from measurement.repository import Collector, Repository
from playout.playout_sim import LinkModel, PlayerConfig
from playout.verdict import TestRecord
from synth.corpus_synth import SyntheticVideo
from utils.errors import ConfigError, NoEligibleVideos
from utils.logger import get_logger

logger = get_logger(__name__)


@dataclass(frozen=True)
class ClassifiedVideo:
    """分析ステップで分類された動画"""
    video_id: str
    duration: float
    bucket: tuple


def default_links(cfg: CycleConfig) -> dict[int, LinkModel]:
    """MAごとの定数帯域リンク（[link_kbps_min, link_kbps_max] の対数一様）"""
    rng = np.random.default_rng(np.random.SeedSequence([int(cfg.seed), 0x11A4]))
    low, high = math.log(cfg.link_kbps_min), math.log(cfg.link_kbps_max)
    return {ma_id: LinkModel.constant(math.exp(rng.uniform(low, high))) for ma_id in range(cfg.num_agents)}


def first_quartile(durations: Sequence[float]) -> float:
    return float(np.percentile(np.asarray(durations, dtype=float), 25))


def classify_tested(records: Sequence[TestRecord], min_length: float) -> list[ClassifiedVideo]:
    """テスト済み動画を初出順に分類（MINLENGTH 未満は除外）"""
    seen = {}
    for record in records:
        if record.video_id in seen or record.video_duration < min_length:
            continue
        seen[record.video_id] = ClassifiedVideo(
            video_id=record.video_id,
            duration=record.video_duration,
            bucket=record.bucket[:3],
        )
    return list(seen.values())


class Controller:
    """計測サイクルのコントローラ"""

    def __init__(self, cfg: CycleConfig, videos: Sequence[SyntheticVideo],
                 links: Optional[dict[int, LinkModel]] = None, repository: Optional[Repository] = None):
        self.cfg = cfg
        usable = [v for v in videos if _has_trace(v, cfg.resolution)]
        if len(usable) < len(videos):
            logger.warning(f"{cfg.resolution} のトレースが無い動画を除外しました: {len(videos) - len(usable)}本")
        self.videos = {video.video_id: video for video in usable}
        self.links = links if links is not None else default_links(cfg)
        missing = [ma for ma in range(cfg.num_agents) if ma not in self.links]
        if missing:
            raise ConfigError(f"リンクが定義されていないMAがあります: {missing}")
        self.agents = [
            MeasurementAgent(ma_id=ma, link=self.links[ma], idle=ma not in cfg.busy_agents)
            for ma in range(cfg.num_agents)
        ]
        self.repository = repository if repository is not None else Repository(min_length=cfg.min_length)
        self.collector = Collector(self.repository)
        self.context = TestContext(
            videos=self.videos,
            chart_service=ChartService(usable, zipf_s=cfg.zipf_s, seed=cfg.seed),
            collector=self.collector,
            player=PlayerConfig(initial_buffer=cfg.initial_buffer, rebuffer_target=cfg.rebuffer_target,
                                cutoff=cfg.cutoff),
            thresholds=cfg.thresholds,
            resolution=cfg.resolution,
            seed=cfg.seed,
        )

    def _dispatch(self, jobs: Sequence[tuple[MeasurementAgent, list[Instruction]]]) -> list[TestRecord]:
        """MAごとの指示列を実行（MA内は順番に、MA間は並列に）"""
        def work(job):
            agent, instructions = job
            records = []
            for instruction in instructions:
                try:
                    record = run_instruction(agent, instruction, self.context)
                except NoEligibleVideos as e:
                    logger.warning(f"MA{agent.ma_id}: {e}")
                    continue
                if record is not None:
                    records.append(record)
            return records

        if self.cfg.workers > 1:
            with ThreadPoolExecutor(max_workers=self.cfg.workers) as executor:
                results = list(executor.map(work, jobs))
        else:
            results = [work(job) for job in jobs]
        return [record for records in results for record in records]

    def run_cycle(self, cycle: int) -> list[TestRecord]:
        """
        計測サイクルを1回実行

        Args:
            cycle: サイクル番号（0始まり、開始日時は start_date + cycle 週）

        Returns:
            list[TestRecord]: このサイクルで追加されたレコード
        """
        cfg = self.cfg
        scheduled_at = cfg.cycle_start(cycle).isoformat()
        min_length = self.repository.min_length
        logger.info(f"サイクル{cycle}を開始します: {scheduled_at} MINLENGTH={min_length:.1f}s")

        # フェーズ1: チャート取得 + ランダムテスト
        collect = CollectChartsInstruction(cycle=cycle, chart_size=cfg.chart_size, min_length=min_length,
                                           scheduled_at=scheduled_at)
        phase1 = self._dispatch([(agent, [collect]) for agent in self.agents])

        # フェーズ2: 分析（MINLENGTH はテスト済み動画全体の第1四分位数）
        tested = self.repository.records
        if tested:
            self.repository.record_minlength(cycle, first_quartile([r.video_duration for r in tested]), cfg.cutoff)
        classified = classify_tested(sorted(phase1, key=lambda r: (r.ma_id, r.sequence)),
                                     self.repository.min_length)

        # フェーズ3: 分類済みリストを巡回して指示2を割り当てる
        remaining = cfg.tests_per_ma_per_cycle - 1
        if remaining > 0 and not classified:
            logger.warning(f"サイクル{cycle}: 分類済みの動画が無いため指示2を割り当てません")
        elif remaining > 0:
            jobs = []
            for position, agent in enumerate(self.agents):
                instructions = [
                    TestVideoInstruction(
                        cycle=cycle,
                        video_id=classified[(position * remaining + j) % len(classified)].video_id,
                        scheduled_at=scheduled_at,
                    )
                    for j in range(remaining)
                ]
                jobs.append((agent, instructions))
            self._dispatch(jobs)

        added = self.repository.records_for_cycle(cycle)
        logger.info(f"サイクル{cycle}が完了しました: {len(added)}件 分類{len(classified)}本 "
                    f"MINLENGTH={self.repository.min_length:.1f}s")
        return added

    def run(self, show_progress: bool = False,
            on_cycle: Optional[Callable[[int, list[TestRecord]], None]] = None) -> Repository:
        """設定されたサイクル数を順に実行"""
        for cycle in tqdm(range(self.cfg.cycles), desc="cycle", disable=not show_progress):
            added = self.run_cycle(cycle)
            if on_cycle is not None:
                on_cycle(cycle, added)
        return self.repository


def _has_trace(video: SyntheticVideo, resolution: str) -> bool:
    rendition = video.renditions.get(resolution)
    return rendition is not None and rendition.available and rendition.trace is not None


def run_cycle(cfg: CycleConfig, videos: Sequence[SyntheticVideo], links: Optional[dict[int, LinkModel]] = None,
              show_progress: bool = False) -> Repository:
    """
    計測サイクルを実行してリポジトリを返す

    Args:
        cfg: サイクル設定
        videos: コーパス（cfg.resolution のトレースがある動画だけ使う）
        links: MA番号 → リンクモデル（Noneの場合は設定のシードから生成）

    Returns:
        Repository: 結果（同じ入力なら同じ内容）
    """
    return Controller(cfg, videos, links=links).run(show_progress=show_progress)
