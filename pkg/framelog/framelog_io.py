"""
フレームログ入出力モジュール
正規化CSV形式の読み書き

形式（UTF-8, LF改行）:
    # video_id=abc
    # itag=134
    # declared_duration=180.0
    index,pts_seconds,size_bytes,is_key
    0,0.000000,1200,1
    ...
先頭の "# key=value" 行は任意。is_key は空欄可。
"""
import csv
import io
from pathlib import Path
from typing import Optional, Union

from config.constants import CSV_PTS_DECIMALS
from traces.itag import ITAG_CATALOG, Container, ItagDescriptor, lookup_itag
from traces.trace_core import Frame, FrameLog
from utils.errors import EmptyLog, ParseError, SchemaError, UnknownItag
from utils.logger import get_logger

logger = get_logger(__name__)

CSV_HEADER = ("index", "pts_seconds", "size_bytes", "is_key")
# ヘッダから is_key を省略した形式も受け付ける
_ACCEPTED_HEADERS = (CSV_HEADER, CSV_HEADER[:3])

DEFAULT_ITAG = 134


def _format_pts(pts: float) -> str:
    """小数6桁で表現できればそれを使い、できなければ往復可能な最短表現にする"""
    fixed = f"{pts:.{CSV_PTS_DECIMALS}f}"
    if float(fixed) == pts:
        return fixed
    return repr(float(pts))


def _format_key(is_key: Optional[bool]) -> str:
    if is_key is None:
        return ""
    return "1" if is_key else "0"


def _parse_key(cell: str, line: int) -> Optional[bool]:
    value = cell.strip().lower()
    if value == "":
        return None
    if value in ("1", "true"):
        return True
    if value in ("0", "false"):
        return False
    raise ParseError(line, f"is_keyが不正です: {cell!r}")


def _itag_from_metadata(metadata: dict[str, str]) -> ItagDescriptor:
    """メタデータ行から itag 記述子を復元（無ければ既定の itag）"""
    code = metadata.get("itag", str(DEFAULT_ITAG))
    if "resolution" in metadata and "container" in metadata:
        try:
            return ItagDescriptor(
                itag=int(code),
                resolution=metadata["resolution"],
                container=Container(metadata["container"]),
                has_audio=metadata.get("has_audio", "0") in ("1", "true"),
            )
        except ValueError as e:
            raise ParseError(1, f"itagの属性が不正です: {e}") from e
    try:
        return lookup_itag(int(code))
    except (ValueError, UnknownItag):
        logger.warning(f"未知のitagのため既定値を使います: {code}")
        return lookup_itag(DEFAULT_ITAG)


def write_framelog_csv(log: FrameLog) -> bytes:
    """
    フレームログを正規化CSVに変換

    Args:
        log: フレームログ

    Returns:
        bytes: UTF-8 のCSV
    """
    buffer = io.StringIO()
    buffer.write(f"# video_id={log.video_id}\n")
    buffer.write(f"# itag={log.itag.itag}\n")
    if ITAG_CATALOG.get(log.itag.itag) != log.itag:
        # カタログ外の記述子はそのまま復元できるように属性も書く
        buffer.write(f"# resolution={log.itag.resolution}\n")
        buffer.write(f"# container={log.itag.container.value}\n")
        buffer.write(f"# has_audio={int(log.itag.has_audio)}\n")
    if log.declared_duration is not None:
        buffer.write(f"# declared_duration={repr(float(log.declared_duration))}\n")

    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for index, frame in enumerate(log.frames):
        writer.writerow((index, _format_pts(frame.pts), frame.size, _format_key(frame.is_key)))
    return buffer.getvalue().encode("utf-8")


def read_framelog_csv(
    data: Union[bytes, str],
    video_id: Optional[str] = None,
    itag: Optional[ItagDescriptor] = None,
) -> FrameLog:
    """
    正規化CSVからフレームログを読み込む

    Args:
        data: CSVの内容
        video_id: メタデータ行より優先する動画ID
        itag: メタデータ行より優先する itag

    Returns:
        FrameLog: フレームログ

    Raises:
        SchemaError: ヘッダ不一致
        ParseError: 数値でないセル（行番号付き）
        MalformedLog: pts の逆行など
        EmptyLog: データ行が無い
    """
    if isinstance(data, bytes):
        try:
            text = data.decode("utf-8")
        except UnicodeDecodeError as e:
            raise SchemaError(f"UTF-8として読めません: {e}") from e
    else:
        text = data

    lines = text.splitlines()
    metadata: dict[str, str] = {}
    position = 0
    while position < len(lines) and lines[position].startswith("#"):
        key, sep, value = lines[position][1:].strip().partition("=")
        if sep:
            metadata[key.strip()] = value.strip()
        position += 1

    if position >= len(lines):
        raise SchemaError("ヘッダ行がありません")
    header = tuple(cell.strip() for cell in next(csv.reader([lines[position]])))
    if header not in _ACCEPTED_HEADERS:
        raise SchemaError(f"ヘッダがスキーマと一致しません: {','.join(header)}")

    frames = []
    reader = csv.reader(lines[position + 1:])
    for offset, row in enumerate(reader):
        line = position + 2 + offset
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) < 3:
            raise ParseError(line, f"列が不足しています: {row}")
        try:
            pts = float(row[1])
            size = int(row[2])
        except ValueError as e:
            raise ParseError(line, str(e)) from e
        is_key = _parse_key(row[3], line) if len(row) > 3 else None
        frames.append(Frame(pts=pts, size=size, is_key=is_key))

    if not frames:
        raise EmptyLog("CSVにフレームがありません")

    declared = None
    if "declared_duration" in metadata:
        try:
            declared = float(metadata["declared_duration"])
        except ValueError as e:
            raise ParseError(1, f"declared_durationが不正です: {metadata['declared_duration']}") from e

    if itag is None:
        itag = _itag_from_metadata(metadata)

    log = FrameLog(
        video_id=video_id if video_id is not None else metadata.get("video_id", ""),
        itag=itag,
        frames=tuple(frames),
        declared_duration=declared,
    )
    logger.debug(f"CSVフレームログを読み込みました: {log.video_id} ({len(frames)}フレーム)")
    return log


def load_framelog_csv(filepath: Path, **kwargs) -> FrameLog:
    """ファイルからフレームログCSVを読み込む"""
    try:
        data = Path(filepath).read_bytes()
    except OSError as e:
        logger.error(f"フレームログの読み込みに失敗しました: {e}")
        raise
    return read_framelog_csv(data, **kwargs)


def save_framelog_csv(log: FrameLog, filepath: Path) -> Path:
    """フレームログをCSVファイルに保存"""
    filepath = Path(filepath)
    filepath.parent.mkdir(parents=True, exist_ok=True)
    filepath.write_bytes(write_framelog_csv(log))
    logger.debug(f"フレームログを保存しました: {filepath}")
    return filepath
