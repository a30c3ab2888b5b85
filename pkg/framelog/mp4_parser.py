"""
MP4（ISO-BMFF）解析モジュール
映像トラックのサンプルサイズと復号時刻からフレームログを取り出す

対応:
  - 非断片化MP4: moov/trak/mdia/minf/stbl の stsz・stts と mdhd の timescale
  - 断片化MP4（DASH）: moov/mvex/trex の既定値 + moof/traf の tfhd・trun
音声トラック・未知のボックスは読み飛ばす。pts には復号時刻を使う（composition offset は無視）。
"""
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import BinaryIO, Iterator, Optional, Union

from traces.itag import Container, ItagDescriptor
from traces.trace_core import Frame, FrameLog
from utils.errors import InconsistentSampleTable, Mp4ParseError, NoVideoTrack, TruncatedBox
from utils.logger import get_logger

logger = get_logger(__name__)

# 子ボックスを持つコンテナ
CONTAINER_BOXES = {b"moov", b"trak", b"mdia", b"minf", b"stbl", b"mvex", b"moof", b"traf"}

# 改変された入力で巨大な配列を確保しないための上限
MAX_SAMPLES = 1_000_000

# tfhd フラグ
TFHD_BASE_DATA_OFFSET = 0x000001
TFHD_SAMPLE_DESCRIPTION_INDEX = 0x000002
TFHD_DEFAULT_DURATION = 0x000008
TFHD_DEFAULT_SIZE = 0x000010
TFHD_DEFAULT_FLAGS = 0x000020

# trun フラグ
TRUN_DATA_OFFSET = 0x000001
TRUN_FIRST_SAMPLE_FLAGS = 0x000004
TRUN_DURATION = 0x000100
TRUN_SIZE = 0x000200
TRUN_FLAGS = 0x000400
TRUN_COMPOSITION_OFFSET = 0x000800


@dataclass(frozen=True)
class Mp4SampleTable:
    """映像トラックのサンプルテーブル"""
    timescale: int
    sample_sizes: tuple[int, ...]
    sample_deltas: tuple[int, ...]
    fragmented: bool
    track_id: int = 0
    height: int = 0

    def __post_init__(self):
        if self.timescale <= 0:
            raise InconsistentSampleTable(f"timescaleが不正です: {self.timescale}")
        if len(self.sample_sizes) != len(self.sample_deltas):
            raise InconsistentSampleTable(
                f"サンプル数が一致しません: sizes={len(self.sample_sizes)} deltas={len(self.sample_deltas)}"
            )


@dataclass(frozen=True)
class _Box:
    type: bytes
    offset: int
    payload: int
    end: int


@dataclass
class _Track:
    track_id: int = 0
    handler: bytes = b""
    timescale: int = 0
    height: int = 0
    has_stsz: bool = False
    sizes: list[int] = field(default_factory=list)
    deltas: list[int] = field(default_factory=list)


@dataclass
class _TrackDefaults:
    duration: Optional[int] = None
    size: Optional[int] = None


def _unpack(fmt: str, data: bytes, offset: int, limit: int) -> tuple:
    """limit を越えて読まない unpack"""
    size = struct.calcsize(fmt)
    if offset < 0 or offset + size > limit:
        raise TruncatedBox(offset, f"{size}バイトを読めません（残り{max(limit - offset, 0)}）")
    return struct.unpack_from(fmt, data, offset)


def _iter_boxes(data: bytes, start: int, end: int) -> Iterator[_Box]:
    """[start, end) のボックスを順に返す"""
    offset = start
    while offset < end:
        if end - offset < 8:
            raise TruncatedBox(offset, "ボックスヘッダが途中で切れています")
        size, box_type = struct.unpack_from(">I4s", data, offset)
        header = 8
        if size == 1:
            (size,) = _unpack(">Q", data, offset + 8, end)
            header = 16
        elif size == 0:
            size = end - offset
        if size < header:
            raise TruncatedBox(offset, f"ボックスサイズが不正です: {size}")
        if offset + size > end:
            raise TruncatedBox(offset, f"ボックス {box_type!r} が入力の残りより長いです ({size} > {end - offset})")
        yield _Box(type=box_type, offset=offset, payload=offset + header, end=offset + size)
        offset += size


def _children(data: bytes, box: _Box) -> Iterator[_Box]:
    return _iter_boxes(data, box.payload, box.end)


def _full_box(data: bytes, box: _Box) -> tuple[int, int]:
    """(version, flags)"""
    (word,) = _unpack(">I", data, box.payload, box.end)
    return word >> 24, word & 0x00FFFFFF


def _parse_tkhd(data: bytes, box: _Box, track: _Track):
    version, _ = _full_box(data, box)
    pos = box.payload + 4 + (16 if version == 1 else 8)
    (track.track_id,) = _unpack(">I", data, pos, box.end)
    # width/height（16.16固定小数点）は末尾8バイト
    if box.end - box.payload >= 84:
        _, height = _unpack(">II", data, box.end - 8, box.end)
        track.height = height >> 16


def _parse_mdhd(data: bytes, box: _Box, track: _Track):
    version, _ = _full_box(data, box)
    pos = box.payload + 4 + (16 if version == 1 else 8)
    (track.timescale,) = _unpack(">I", data, pos, box.end)


def _parse_hdlr(data: bytes, box: _Box, track: _Track):
    (track.handler,) = _unpack(">4s", data, box.payload + 8, box.end)


def _parse_stsz(data: bytes, box: _Box, track: _Track):
    sample_size, count = _unpack(">II", data, box.payload + 4, box.end)
    if count > MAX_SAMPLES:
        raise InconsistentSampleTable(f"サンプル数が多すぎます: {count}")
    track.has_stsz = True
    if sample_size != 0:
        track.sizes = [sample_size] * count
        return
    track.sizes = list(_unpack(f">{count}I", data, box.payload + 12, box.end))


def _parse_stts(data: bytes, box: _Box, track: _Track):
    (entry_count,) = _unpack(">I", data, box.payload + 4, box.end)
    if entry_count > MAX_SAMPLES:
        raise InconsistentSampleTable(f"sttsのエントリ数が多すぎます: {entry_count}")
    entries = _unpack(f">{entry_count * 2}I", data, box.payload + 8, box.end)
    total = sum(entries[0::2])
    if total > MAX_SAMPLES:
        raise InconsistentSampleTable(f"sttsのサンプル数が多すぎます: {total}")
    deltas: list[int] = []
    for count, delta in zip(entries[0::2], entries[1::2]):
        deltas.extend([delta] * count)
    track.deltas = deltas


def _parse_trak(data: bytes, trak: _Box) -> _Track:
    track = _Track()
    stack = [trak]
    while stack:
        parent = stack.pop()
        for box in _children(data, parent):
            if box.type == b"tkhd":
                _parse_tkhd(data, box, track)
            elif box.type == b"mdhd":
                _parse_mdhd(data, box, track)
            elif box.type == b"hdlr":
                _parse_hdlr(data, box, track)
            elif box.type == b"stsz":
                _parse_stsz(data, box, track)
            elif box.type == b"stts":
                _parse_stts(data, box, track)
            elif box.type in (b"mdia", b"minf", b"stbl"):
                stack.append(box)
    return track


def _parse_trex(data: bytes, box: _Box) -> tuple[int, _TrackDefaults]:
    track_id, _, duration, size, _ = _unpack(">IIIII", data, box.payload + 4, box.end)
    return track_id, _TrackDefaults(duration=duration, size=size)


def _parse_traf(data: bytes, traf: _Box, video_track_id: int, trex: dict[int, _TrackDefaults],
                sizes: list[int], deltas: list[int]):
    """traf 1つ分のサンプルを sizes / deltas に追加（対象トラック以外は無視）"""
    track_id = None
    defaults = _TrackDefaults()
    for box in _children(data, traf):
        if box.type == b"tfhd":
            _, flags = _full_box(data, box)
            (track_id,) = _unpack(">I", data, box.payload + 4, box.end)
            base = trex.get(track_id, _TrackDefaults())
            defaults = _TrackDefaults(duration=base.duration, size=base.size)
            pos = box.payload + 8
            if flags & TFHD_BASE_DATA_OFFSET:
                pos += 8
            if flags & TFHD_SAMPLE_DESCRIPTION_INDEX:
                pos += 4
            if flags & TFHD_DEFAULT_DURATION:
                (defaults.duration,) = _unpack(">I", data, pos, box.end)
                pos += 4
            if flags & TFHD_DEFAULT_SIZE:
                (defaults.size,) = _unpack(">I", data, pos, box.end)
                pos += 4
        elif box.type == b"trun":
            if track_id is None:
                raise InconsistentSampleTable(f"tfhd より前に trun があります (offset={box.offset})")
            if track_id != video_track_id:
                continue
            _parse_trun(data, box, defaults, sizes, deltas)


def _parse_trun(data: bytes, box: _Box, defaults: _TrackDefaults, sizes: list[int], deltas: list[int]):
    _, flags = _full_box(data, box)
    (count,) = _unpack(">I", data, box.payload + 4, box.end)
    pos = box.payload + 8
    if flags & TRUN_DATA_OFFSET:
        pos += 4
    if flags & TRUN_FIRST_SAMPLE_FLAGS:
        pos += 4

    fields = [bit for bit in (TRUN_DURATION, TRUN_SIZE, TRUN_FLAGS, TRUN_COMPOSITION_OFFSET) if flags & bit]
    stride = 4 * len(fields)
    if stride and pos + stride * count > box.end:
        raise TruncatedBox(box.offset, f"trunのサンプル数({count})に対してボックスが短すぎます")
    if len(sizes) + count > MAX_SAMPLES:
        raise InconsistentSampleTable(f"サンプル数が多すぎます: {len(sizes) + count}")
    if not flags & TRUN_DURATION and defaults.duration is None:
        raise InconsistentSampleTable(f"サンプル時間が定義されていません (offset={box.offset})")
    if not flags & TRUN_SIZE and defaults.size is None:
        raise InconsistentSampleTable(f"サンプルサイズが定義されていません (offset={box.offset})")

    values = _unpack(f">{count * len(fields)}I", data, pos, box.end) if fields else ()
    for i in range(count):
        record = dict(zip(fields, values[i * len(fields):(i + 1) * len(fields)]))
        deltas.append(record.get(TRUN_DURATION, defaults.duration))
        sizes.append(record.get(TRUN_SIZE, defaults.size))


def read_sample_table(data: bytes) -> Mp4SampleTable:
    """
    MP4バイト列から最初の映像トラックのサンプルテーブルを取り出す

    Args:
        data: MP4ファイルの内容

    Returns:
        Mp4SampleTable: サンプルテーブル

    Raises:
        TruncatedBox: ボックスが途中で切れている
        NoVideoTrack: 映像トラックが無い / サンプルが0件
        InconsistentSampleTable: テーブルの不整合
    """
    try:
        return _read_sample_table(data)
    except Mp4ParseError:
        raise
    except (struct.error, IndexError, ValueError, OverflowError, MemoryError) as e:
        raise InconsistentSampleTable(f"MP4の解析に失敗しました: {e}") from e


def _read_sample_table(data: bytes) -> Mp4SampleTable:
    tracks: list[_Track] = []
    trex: dict[int, _TrackDefaults] = {}
    moofs: list[_Box] = []
    has_mvex = False

    top_level = list(_iter_boxes(data, 0, len(data)))
    if not top_level:
        raise TruncatedBox(0, "ボックスがありません")
    for box in top_level:
        if box.type == b"moov":
            for child in _children(data, box):
                if child.type == b"trak":
                    tracks.append(_parse_trak(data, child))
                elif child.type == b"mvex":
                    has_mvex = True
                    for grandchild in _children(data, child):
                        if grandchild.type == b"trex":
                            track_id, defaults = _parse_trex(data, grandchild)
                            trex[track_id] = defaults
        elif box.type == b"moof":
            moofs.append(box)

    video = next((t for t in tracks if t.handler == b"vide"), None)
    if video is None:
        raise NoVideoTrack("映像トラックが見つかりません")

    sizes = list(video.sizes)
    deltas = list(video.deltas)
    if len(sizes) != len(deltas):
        raise InconsistentSampleTable(
            f"stszとsttsのサンプル数が一致しません: {len(sizes)} != {len(deltas)}"
        )

    fragmented = bool(moofs) or has_mvex
    for moof in moofs:
        for traf in _children(data, moof):
            if traf.type == b"traf":
                _parse_traf(data, traf, video.track_id, trex, sizes, deltas)

    if not sizes:
        raise NoVideoTrack("映像トラックにサンプルがありません")
    if not fragmented and not video.has_stsz:
        raise NoVideoTrack("サンプルテーブル(stsz)がありません")

    return Mp4SampleTable(
        timescale=video.timescale,
        sample_sizes=tuple(sizes),
        sample_deltas=tuple(deltas),
        fragmented=fragmented,
        track_id=video.track_id,
        height=video.height,
    )


def table_to_framelog(table: Mp4SampleTable, video_id: str = "",
                      itag: Optional[ItagDescriptor] = None) -> FrameLog:
    """サンプルテーブルをフレームログに変換（pts_i = それまでの delta の和 / timescale）"""
    if itag is None:
        container = Container.MP4_DASH if table.fragmented else Container.MP4
        itag = ItagDescriptor.other(itag=0, height=table.height, container=container)
    frames = []
    ticks = 0
    for size, delta in zip(table.sample_sizes, table.sample_deltas):
        frames.append(Frame(pts=ticks / table.timescale, size=size))
        ticks += delta
    return FrameLog(video_id=video_id, itag=itag, frames=tuple(frames))


def parse_mp4(source: Union[bytes, bytearray, BinaryIO], video_id: str = "",
              itag: Optional[ItagDescriptor] = None) -> FrameLog:
    """
    MP4からフレームログを取り出す

    Args:
        source: MP4のバイト列、またはバイナリストリーム
        video_id: 動画ID
        itag: itag記述子（Noneの場合は tkhd の高さとコンテナから作る）

    Returns:
        FrameLog: フレームログ
    """
    data = bytes(source) if isinstance(source, (bytes, bytearray)) else source.read()
    table = read_sample_table(data)
    log = table_to_framelog(table, video_id=video_id, itag=itag)
    logger.info(
        f"MP4を解析しました: {video_id or '(no id)'} samples={len(log.frames)} "
        f"timescale={table.timescale} fragmented={table.fragmented}"
    )
    return log


def parse_mp4_file(filepath: Path, video_id: Optional[str] = None,
                   itag: Optional[ItagDescriptor] = None) -> FrameLog:
    """ファイルパスからMP4を解析"""
    filepath = Path(filepath)
    with open(filepath, "rb") as f:
        return parse_mp4(f, video_id=video_id if video_id is not None else filepath.stem, itag=itag)
