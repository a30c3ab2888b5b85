"""
レポート出力モジュール
指標（metric, value, unit, provenance）をCSVとJSONに書き出す

JSONには実行時の設定をそのまま残す（タイムスタンプは付けないので同じ入力なら同じ内容になる）。
"""
import csv
import io
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from utils.errors import InvalidParameterError
from utils.file_manager import file_manager
from utils.logger import get_logger

logger = get_logger(__name__)

REPORT_HEADER = ("metric", "value", "unit", "provenance")

Value = Union[int, float, str, bool]


def _plain(value):
    """numpy のスカラーを組み込み型に戻す"""
    if isinstance(value, np.generic):
        return value.item()
    return value


@dataclass(frozen=True)
class ReportRecord:
    """レポート1行"""
    metric: str
    value: Value
    unit: str
    provenance: str = ""

    def __post_init__(self):
        object.__setattr__(self, "value", _plain(self.value))
        if not self.metric:
            raise InvalidParameterError("metric が空です")
        if not self.unit:
            raise InvalidParameterError(f"単位がありません: {self.metric}")
        if isinstance(self.value, float) and not math.isfinite(self.value):
            raise InvalidParameterError(f"値が有限ではありません: {self.metric}={self.value}")


def _format_value(value: Value) -> str:
    value = _plain(value)
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def records_to_csv(records: Sequence[ReportRecord]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(REPORT_HEADER)
    for record in records:
        writer.writerow((record.metric, _format_value(record.value), record.unit, record.provenance))
    return buffer.getvalue()


def write_table_csv(header: Sequence[str], rows: Iterable[Sequence], filepath: Path) -> Path:
    """
    プロット用の列データをCSVで書き出す

    Args:
        header: 列名
        rows: 行（floatは repr で書く）
        filepath: 保存先

    Returns:
        Path: 保存されたファイルのパス
    """
    filepath = Path(filepath)
    file_manager.ensure_directory_exists(filepath.parent)
    with open(filepath, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow(["" if cell is None else _format_value(cell) for cell in row])
    logger.debug(f"CSVを保存しました: {filepath}")
    return filepath


def write_report(records: Sequence[ReportRecord], directory: Path, config_echo: Optional[dict] = None,
                 name: str = "report") -> tuple[Path, Path]:
    """
    レポートを <name>.csv と <name>.json に書き出す

    Args:
        records: レポート行
        directory: 出力ディレクトリ
        config_echo: 実行に使った設定（JSONにそのまま残す）
        name: ファイル名の基部

    Returns:
        tuple[Path, Path]: CSVとJSONのパス
    """
    directory = Path(directory)
    file_manager.ensure_directory_exists(directory)
    csv_path = directory / f"{name}.csv"
    csv_path.write_text(records_to_csv(records), encoding="utf-8")
    json_path = file_manager.save_json(
        {"config": config_echo or {}, "records": [asdict(record) for record in records]},
        directory / f"{name}.json",
    )
    logger.info(f"レポートを保存しました: {csv_path} ({len(records)}行)")
    return csv_path, json_path


def load_report(filepath: Path) -> list[ReportRecord]:
    """write_report が書いたJSONを読み込む"""
    data = file_manager.load_json(filepath)
    return [ReportRecord(**row) for row in data["records"]]
