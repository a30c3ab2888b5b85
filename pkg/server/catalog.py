"""
トラフィック生成用カタログ
最低解像度のフレームログと解像度ごとの広告平均ビットレートを保持し、送出スケジュールを作る
"""
import hashlib
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from analysis.scale_sim import rescale
from config.constants import TRACE_INTERVAL
from framelog.framelog_io import load_framelog_csv
from synth.corpus_synth import SyntheticVideo
from traces.itag import Container, itag_for
from traces.trace_core import BitrateTrace, FrameLog, bin_frames, trace_to_framelog
from utils.errors import BadRequest, InvalidParameterError, NotFound
from utils.file_manager import file_manager
from utils.logger import get_logger

logger = get_logger(__name__)


def _resolution_height(label: str) -> int:
    return int(label[:-1]) if label.endswith("p") and label[:-1].isdigit() else 0


@dataclass(frozen=True)
class CatalogEntry:
    """カタログ1件（保存するのは最低解像度のフレームログだけ）"""
    video_id: str
    log: FrameLog
    advertised: dict

    def __post_init__(self):
        if not self.log.frames or self.log.total_bytes <= 0:
            raise InvalidParameterError(f"フレームログが空です: {self.video_id}")
        if any(not (kbps > 0) for kbps in self.advertised.values()):
            raise InvalidParameterError(f"広告平均ビットレートは正の値である必要があります: {self.video_id}")

    def trace(self, interval: float = TRACE_INTERVAL) -> BitrateTrace:
        return bin_frames(self.log, interval)

    def describe(self, interval: float = TRACE_INTERVAL) -> dict:
        """GET /videos 用のメタデータ"""
        trace = self.trace(interval)
        return {
            "video_id": self.video_id,
            "itag": self.log.itag.itag,
            "stored_resolution": self.log.itag.resolution,
            "duration": trace.source_duration,
            "stored_mean_kbps": trace.mean_kbps,
            "advertised_kbps": dict(sorted(self.advertised.items(), key=lambda kv: _resolution_height(kv[0]))),
        }


@dataclass(frozen=True)
class ChunkSchedule:
    """送出スケジュール（send_at: 応答開始からの秒, 各チャンクのバイト数）"""
    video_id: str
    target_mean: float
    chunks: tuple[tuple[float, int], ...]
    checksum: str

    @property
    def total_bytes(self) -> int:
        return sum(size for _, size in self.chunks)


def schedule_checksum(chunks: Iterable[tuple[float, int]]) -> str:
    digest = hashlib.sha256()
    for send_at, size in chunks:
        digest.update(f"{send_at:.6f}:{size}\n".encode("ascii"))
    return digest.hexdigest()


def shape_schedule(entry: CatalogEntry, target_mean: float, interval: float = TRACE_INTERVAL) -> ChunkSchedule:
    """
    保存済みトレースを target_mean にスケーリングし、区間ごとのチャンクに変換

    累積値を丸めて差分を取るので、合計バイト数の誤差は1バイト未満に収まる。

    Args:
        entry: カタログ項目
        target_mean: 目標平均ビットレート（kbps）
        interval: 区間（秒）

    Returns:
        ChunkSchedule: 送出スケジュール

    Raises:
        BadRequest: target_mean が正の有限値でない
    """
    if not isinstance(target_mean, (int, float)) or not math.isfinite(target_mean) or target_mean <= 0:
        raise BadRequest(f"目標平均ビットレートは正の値である必要があります: {target_mean}", parameter="mean_kbps")
    scaled = rescale(entry.trace(interval), float(target_mean))
    cumulative = np.round(np.cumsum(scaled.as_array()) * interval * 1000.0 / 8.0)
    sizes = np.diff(np.concatenate(([0.0], cumulative))).astype(np.int64)
    chunks = tuple((round(i * interval, 9), int(size)) for i, size in enumerate(sizes))
    return ChunkSchedule(video_id=entry.video_id, target_mean=float(target_mean), chunks=chunks,
                         checksum=schedule_checksum(chunks))


class Catalog:
    """読み取り専用のカタログ"""

    def __init__(self, entries: Iterable[CatalogEntry] = ()):
        self._entries = {entry.video_id: entry for entry in entries}

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, video_id: str) -> bool:
        return video_id in self._entries

    def get(self, video_id: str) -> CatalogEntry:
        """
        Raises:
            NotFound: 未登録の動画ID
        """
        try:
            return self._entries[video_id]
        except KeyError as e:
            raise NotFound(f"動画が見つかりません: {video_id}") from e

    def entries(self) -> list[CatalogEntry]:
        return [self._entries[k] for k in sorted(self._entries)]

    @classmethod
    def from_videos(cls, videos: Iterable[SyntheticVideo]) -> "Catalog":
        """合成コーパスから作成（最低解像度のトレースを保存）"""
        entries = []
        for video in videos:
            available = sorted(
                (r for r in video.renditions.values() if r.available and r.trace is not None),
                key=lambda r: _resolution_height(r.resolution),
            )
            if not available:
                continue
            lowest = available[0]
            log = trace_to_framelog(lowest.trace, video.video_id, itag_for(lowest.resolution, Container.MP4_DASH))
            advertised = {r.resolution: r.mean_kbps for r in video.renditions.values() if r.available}
            entries.append(CatalogEntry(video_id=video.video_id, log=log, advertised=advertised))
        logger.info(f"カタログを作成しました: {len(entries)}本")
        return cls(entries)

    @classmethod
    def from_directory(cls, directory: Path) -> "Catalog":
        """コーパスの書き出し形式のディレクトリから読み込む"""
        directory = Path(directory)
        if not directory.is_dir():
            raise NotFound(f"カタログディレクトリが見つかりません: {directory}")
        entries = []
        for path in sorted(directory.glob("*.json")):
            metadata = file_manager.load_json(path)
            renditions = metadata.get("renditions", {})
            available = sorted((r for r, f in renditions.items() if f.get("available")), key=_resolution_height)
            stored: Optional[Path] = None
            for resolution in available:
                candidate = file_manager.trace_path(directory, metadata["video_id"], resolution)
                if candidate.exists():
                    stored = candidate
                    break
            if stored is None:
                logger.warning(f"フレームログが無いためスキップします: {metadata.get('video_id')}")
                continue
            advertised = {r: renditions[r]["mean_kbps"] for r in available}
            entries.append(CatalogEntry(video_id=metadata["video_id"], log=load_framelog_csv(stored),
                                        advertised=advertised))
        logger.info(f"カタログを読み込みました: {directory} ({len(entries)}本)")
        return cls(entries)
