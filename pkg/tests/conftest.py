"""
テスト共通のフィクスチャ
MP4 ボックスの組み立てと、トレース・フレームログの生成補助
"""
import os
import struct
from typing import Sequence

# テスト中はログファイルを書かない（config の読込より前に設定する）
os.environ.setdefault("LOG_TO_FILE", "false")

import pytest  # noqa: E402

from traces.itag import lookup_itag  # noqa: E402
from traces.trace_core import BitrateTrace, Frame, FrameLog, trace_to_framelog  # noqa: E402

FIXTURE_TIMESCALE = 30000
FIXTURE_SIZES = (100, 200, 300, 400)
FIXTURE_DELTA = 3000
VIDEO_TRACK_ID = 1
AUDIO_TRACK_ID = 2


# --- MP4 ボックス ---

def box(box_type: bytes, payload: bytes = b"") -> bytes:
    return struct.pack(">I4s", 8 + len(payload), box_type) + payload


def full_box(box_type: bytes, payload: bytes = b"", version: int = 0, flags: int = 0) -> bytes:
    return box(box_type, struct.pack(">I", (version << 24) | flags) + payload)


def tkhd(track_id: int, height: int = 360) -> bytes:
    matrix = struct.pack(">9I", 0x00010000, 0, 0, 0, 0x00010000, 0, 0, 0, 0x40000000)
    payload = (
        struct.pack(">IIIII", 0, 0, track_id, 0, 0)
        + b"\0" * 8
        + struct.pack(">hhhH", 0, 0, 0, 0)
        + matrix
        + struct.pack(">II", 640 << 16, height << 16)
    )
    return full_box(b"tkhd", payload, flags=3)


def mdhd(timescale: int) -> bytes:
    return full_box(b"mdhd", struct.pack(">IIII", 0, 0, timescale, 0) + struct.pack(">HH", 0x55C4, 0))


def hdlr(handler: bytes) -> bytes:
    return full_box(b"hdlr", struct.pack(">I4s", 0, handler) + b"\0" * 12 + b"handler\0")


def stsz(sizes: Sequence[int]) -> bytes:
    return full_box(b"stsz", struct.pack(f">II{len(sizes)}I", 0, len(sizes), *sizes))


def stsz_constant(size: int, count: int) -> bytes:
    return full_box(b"stsz", struct.pack(">II", size, count))


def stts(entries: Sequence[tuple[int, int]]) -> bytes:
    flat = [value for entry in entries for value in entry]
    return full_box(b"stts", struct.pack(f">I{len(flat)}I", len(entries), *flat))


def trak(track_id: int, handler: bytes, timescale: int, sample_table: bytes, height: int = 360) -> bytes:
    stbl = box(b"stbl", sample_table)
    minf = box(b"minf", box(b"vmhd" if handler == b"vide" else b"smhd", b"\0" * 8) + stbl)
    mdia = box(b"mdia", mdhd(timescale) + hdlr(handler) + minf)
    return box(b"trak", tkhd(track_id, height) + mdia)


def ftyp() -> bytes:
    return box(b"ftyp", b"isom" + struct.pack(">I", 512) + b"isomiso2avc1mp41")


def build_mp4(sizes: Sequence[int] = FIXTURE_SIZES, delta: int = FIXTURE_DELTA,
              timescale: int = FIXTURE_TIMESCALE, with_audio: bool = True) -> bytes:
    """非断片化MP4（sttsは定数delta 1エントリ、映像の前に音声トラック）"""
    tracks = b""
    if with_audio:
        tracks += trak(AUDIO_TRACK_ID, b"soun", 44100, stts([(3, 1024)]) + stsz([10, 10, 10]))
    entries = [(len(sizes), delta)] if sizes else []
    tracks += trak(VIDEO_TRACK_ID, b"vide", timescale, stts(entries) + stsz(sizes))
    mvhd = full_box(b"mvhd", b"\0" * 96)
    return ftyp() + box(b"moov", mvhd + tracks) + box(b"mdat", b"\0" * sum(sizes))


def trun(samples: Sequence[tuple[int, int]], data_offset: int = 0) -> bytes:
    """duration と size を持つ trun（flags 0x301）"""
    flat = [value for sample in samples for value in sample]
    payload = struct.pack(">Ii", len(samples), data_offset) + struct.pack(f">{len(flat)}I", *flat)
    return full_box(b"trun", payload, flags=0x000301)


def moof(sequence: int, track_id: int, samples: Sequence[tuple[int, int]]) -> bytes:
    tfhd = full_box(b"tfhd", struct.pack(">I", track_id), flags=0x020000)
    tfdt = full_box(b"tfdt", struct.pack(">I", 0))
    traf = box(b"traf", tfhd + tfdt + trun(samples))
    return box(b"moof", full_box(b"mfhd", struct.pack(">I", sequence)) + traf)


def build_fragmented_mp4(sizes: Sequence[int] = FIXTURE_SIZES, delta: int = FIXTURE_DELTA,
                         timescale: int = FIXTURE_TIMESCALE, per_fragment: int = 2) -> bytes:
    """断片化MP4（moov のサンプルテーブルは空、サンプルは moof の trun に入る）"""
    empty_table = stts([]) + stsz([])
    tracks = trak(VIDEO_TRACK_ID, b"vide", timescale, empty_table)
    tracks += trak(AUDIO_TRACK_ID, b"soun", 44100, empty_table)
    trex = full_box(b"trex", struct.pack(">IIIII", VIDEO_TRACK_ID, 1, 0, 0, 0))
    data = ftyp() + box(b"moov", full_box(b"mvhd", b"\0" * 96) + tracks + box(b"mvex", trex))
    for number, start in enumerate(range(0, len(sizes), per_fragment), start=1):
        chunk = sizes[start:start + per_fragment]
        data += moof(number, AUDIO_TRACK_ID, [(1024, 10)])
        data += moof(number, VIDEO_TRACK_ID, [(delta, size) for size in chunk])
        data += box(b"mdat", b"\0" * sum(chunk))
    return data


@pytest.fixture
def fixture_a() -> bytes:
    return build_mp4()


@pytest.fixture
def fixture_b() -> bytes:
    return build_mp4(sizes=())


@pytest.fixture
def fixture_c() -> bytes:
    return build_fragmented_mp4()


# --- トレース / フレームログ ---

def constant_trace(kbps: float, seconds: int, interval: float = 1.0) -> BitrateTrace:
    return BitrateTrace.from_values([kbps] * int(round(seconds / interval)), interval=interval)


def make_log(frames: Sequence[tuple[float, int]], video_id: str = "v", itag: int = 134,
             declared_duration=None) -> FrameLog:
    return FrameLog(
        video_id=video_id,
        itag=lookup_itag(itag),
        frames=tuple(Frame(pts=pts, size=size) for pts, size in frames),
        declared_duration=declared_duration,
    )


def trace_log(values: Sequence[float], video_id: str = "v", itag: int = 134) -> FrameLog:
    """1区間1フレームのフレームログ（bin_frames で values に戻る）"""
    return trace_to_framelog(BitrateTrace.from_values(values), video_id, itag)


@pytest.fixture
def worked_example_media() -> BitrateTrace:
    """1000 kbps 一定の10秒メディア"""
    return constant_trace(1000.0, 10)
