"""
ファイル管理モジュール
コーパス・レポート・計測リポジトリの保存と読み込み
"""
import json
from pathlib import Path
from typing import Any, Iterable, Optional

from config.config import config
from framelog.framelog_io import load_framelog_csv, save_framelog_csv
from synth.corpus_synth import Rendition, SyntheticVideo
from traces.itag import Container, itag_for
from traces.trace_core import bin_frames, trace_to_framelog
from utils.logger import get_logger

logger = get_logger(__name__)


class FileManager:
    """ファイル管理クラス"""

    def __init__(self):
        self.output_dir = config.output_dir
        self.corpus_dir = config.output_corpus_dir
        self.reports_dir = config.output_reports_dir

    def save_json(self, data: Any, filepath: Path) -> Path:
        """
        JSON形式で保存（キーは整列、タイムスタンプは付けない）

        Args:
            data: 保存するデータ
            filepath: ファイルパス

        Returns:
            Path: 保存されたファイルのパス
        """
        filepath = Path(filepath)
        self.ensure_directory_exists(filepath.parent)
        try:
            with open(filepath, "w", encoding="utf-8") as f:
                json.dump(data, f, ensure_ascii=False, indent=2, sort_keys=True)
                f.write("\n")
            logger.debug(f"JSONを保存しました: {filepath}")
            return filepath
        except Exception as e:
            logger.error(f"JSONの保存に失敗しました: {e}")
            raise

    def load_json(self, filepath: Path) -> Any:
        """JSON形式で読み込み"""
        try:
            with open(filepath, "r", encoding="utf-8") as f:
                return json.load(f)
        except Exception as e:
            logger.error(f"JSONの読み込みに失敗しました: {e}")
            raise

    def save_jsonl(self, records: Iterable[dict], filepath: Path) -> Path:
        """1行1レコードのJSONLで保存"""
        filepath = Path(filepath)
        self.ensure_directory_exists(filepath.parent)
        with open(filepath, "w", encoding="utf-8") as f:
            for record in records:
                f.write(json.dumps(record, ensure_ascii=False, sort_keys=True))
                f.write("\n")
        logger.info(f"JSONLを保存しました: {filepath}")
        return filepath

    def trace_path(self, directory: Path, video_id: str, resolution: str) -> Path:
        """コーパス内のトレースCSVのパス"""
        return Path(directory) / f"{video_id}_{resolution}.csv"

    def save_corpus(self, videos: Iterable[SyntheticVideo], directory: Optional[Path] = None) -> Path:
        """
        合成コーパスをディレクトリに保存

        動画ごとにメタデータJSONと、利用可能な解像度ごとのフレームログCSV（1区間1フレーム）を書く。

        Args:
            videos: 合成動画
            directory: 保存先（Noneの場合は設定のコーパスディレクトリ）

        Returns:
            Path: 保存先ディレクトリ
        """
        directory = Path(directory or self.corpus_dir)
        self.ensure_directory_exists(directory)
        count = 0
        for video in videos:
            self.save_json(video.to_metadata(), directory / f"{video.video_id}.json")
            for resolution, rendition in video.renditions.items():
                if rendition.trace is None:
                    continue
                log = trace_to_framelog(rendition.trace, video.video_id,
                                        itag_for(resolution, Container.MP4_DASH))
                save_framelog_csv(log, self.trace_path(directory, video.video_id, resolution))
            count += 1
        logger.info(f"コーパスを保存しました: {directory} ({count}本)")
        return directory

    def load_corpus(self, directory: Optional[Path] = None, interval: Optional[float] = None) -> list[SyntheticVideo]:
        """
        保存済みコーパスを読み込む（トレースCSVがあれば区間ごとに集計し直す）

        Args:
            directory: コーパスディレクトリ
            interval: 集計区間（Noneの場合は設定値）

        Returns:
            list[SyntheticVideo]: 動画IDの昇順
        """
        directory = Path(directory or self.corpus_dir)
        interval = interval or config.trace_interval
        videos = []
        for path in sorted(directory.glob("*.json")):
            metadata = self.load_json(path)
            renditions = {}
            for resolution, fields in metadata["renditions"].items():
                trace = None
                csv_path = self.trace_path(directory, metadata["video_id"], resolution)
                if fields["available"] and csv_path.exists():
                    trace = bin_frames(load_framelog_csv(csv_path), interval)
                renditions[resolution] = Rendition(resolution=resolution, trace=trace, **fields)
            videos.append(SyntheticVideo(
                video_id=metadata["video_id"],
                duration=metadata["duration"],
                category=metadata["category"],
                burstiness=metadata["burstiness"],
                renditions=renditions,
            ))
        logger.info(f"コーパスを読み込みました: {directory} ({len(videos)}本)")
        return videos

    def ensure_directory_exists(self, directory: Path):
        """
        ディレクトリが存在することを確認（存在しない場合は作成）

        Args:
            directory: ディレクトリのパス
        """
        Path(directory).mkdir(parents=True, exist_ok=True)


# グローバルファイルマネージャーインスタンス
file_manager = FileManager()
