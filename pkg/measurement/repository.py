"""
リポジトリとコレクタ
計測結果（TestRecord）を追記専用で保持し、集計はレコードから毎回計算し直す
"""
import json
import threading
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from playout.verdict import TestRecord
from utils.file_manager import file_manager
from utils.logger import get_logger

logger = get_logger(__name__)


@dataclass(frozen=True)
class VideoAggregate:
    """動画ごとの集計"""
    video_id: str
    tests: int
    stalled_tests: int
    mean_total_stall: float
    mean_startup_delay: Optional[float]
    video_duration: float


@dataclass(frozen=True)
class MinLengthUpdate:
    """MINLENGTH 更新の履歴（applied=False は CUTOFF 以上のため無視した候補）"""
    cycle: int
    candidate: float
    applied: bool
    value: float


class Repository:
    """計測結果のリポジトリ（追記専用）"""

    def __init__(self, min_length: float):
        self._records: list[TestRecord] = []
        self.min_length = float(min_length)
        self.min_length_history: list[MinLengthUpdate] = []

    def __len__(self) -> int:
        return len(self._records)

    def _append(self, record: TestRecord):
        self._records.append(record)

    @property
    def records(self) -> tuple[TestRecord, ...]:
        """(ma_id, sequence) 順のレコード"""
        return tuple(sorted(self._records, key=lambda r: (r.ma_id, r.sequence)))

    def records_for_cycle(self, cycle: int) -> list[TestRecord]:
        return [r for r in self.records if r.cycle == cycle]

    def record_minlength(self, cycle: int, candidate: float, cutoff: float) -> bool:
        """
        MINLENGTH の候補を反映（CUTOFF 以上なら無視）

        Returns:
            bool: 反映したかどうか
        """
        applied = candidate < cutoff
        if applied:
            self.min_length = float(candidate)
        else:
            logger.warning(f"MINLENGTH候補 {candidate:.1f}s は CUTOFF {cutoff:.1f}s 以上のため無視します")
        self.min_length_history.append(
            MinLengthUpdate(cycle=cycle, candidate=float(candidate), applied=applied, value=self.min_length)
        )
        return applied

    def aggregates(self) -> dict[str, VideoAggregate]:
        """動画ごとの集計（レコードから計算）"""
        grouped: dict[str, list[TestRecord]] = {}
        for record in self.records:
            grouped.setdefault(record.video_id, []).append(record)
        result = {}
        for video_id in sorted(grouped):
            records = grouped[video_id]
            delays = [r.startup_delay for r in records if r.startup_delay is not None]
            result[video_id] = VideoAggregate(
                video_id=video_id,
                tests=len(records),
                stalled_tests=sum(1 for r in records if r.stall_count > 0),
                mean_total_stall=float(np.mean([r.total_stall for r in records])),
                mean_startup_delay=float(np.mean(delays)) if delays else None,
                video_duration=records[0].video_duration,
            )
        return result

    def bucket_counts(self) -> dict[tuple, int]:
        """分類バケットごとのレコード数"""
        counts = Counter(record.bucket for record in self.records)
        return dict(sorted(counts.items()))

    def to_lines(self) -> list[str]:
        """1行1レコードのJSON文字列（キー整列）"""
        return [json.dumps(record.as_record(), ensure_ascii=False, sort_keys=True) for record in self.records]

    def export_jsonl(self, filepath: Path) -> Path:
        """JSONLで書き出す"""
        return file_manager.save_jsonl((record.as_record() for record in self.records), filepath)


class Collector:
    """計測結果をリポジトリへ直列に追記する"""

    def __init__(self, repository: Repository):
        self.repository = repository
        self._lock = threading.Lock()

    def submit(self, record: TestRecord):
        with self._lock:
            self.repository._append(record)
        logger.debug(f"レコードを受け付けました: ma={record.ma_id} seq={record.sequence} video={record.video_id}")
