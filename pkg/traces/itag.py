"""
itag カタログ
YouTube のストリーム識別子（itag）と解像度・コンテナ・コーデックの対応表
"""
from dataclasses import dataclass
from enum import Enum
from typing import Optional

from utils.errors import UnknownItag


class Container(str, Enum):
    """コンテナ形式"""
    MP4 = "MP4"
    WEBM = "WebM"
    FLV = "FLV"
    MP4_DASH = "MP4-DASH"


# 解像度ラベル（カタログに現れるもの）。それ以外は "other(<height>)" で表す
KNOWN_RESOLUTIONS = ("240p", "360p", "480p", "720p", "1080p")


@dataclass(frozen=True)
class ItagDescriptor:
    """itag 1件分の情報"""
    itag: int
    resolution: str
    container: Container
    has_audio: bool
    video_codec: Optional[str] = None
    audio_codec: Optional[str] = None

    @property
    def is_dash(self) -> bool:
        return self.container is Container.MP4_DASH

    @property
    def height(self) -> Optional[int]:
        """解像度の縦ピクセル数（"720p" → 720, "other(1440)" → 1440）"""
        label = self.resolution
        if label.endswith("p") and label[:-1].isdigit():
            return int(label[:-1])
        if label.startswith("other(") and label.endswith(")"):
            inner = label[len("other("):-1]
            return int(inner) if inner.isdigit() else None
        return None

    @classmethod
    def other(cls, itag: int, height: Optional[int], container: Container = Container.MP4,
              has_audio: bool = False) -> "ItagDescriptor":
        """カタログ外のストリーム用の記述子を作る"""
        label = f"{height}p" if f"{height}p" in KNOWN_RESOLUTIONS else f"other({height or 0})"
        return cls(itag=itag, resolution=label, container=container, has_audio=has_audio)


_CATALOG = (
    ItagDescriptor(46, "1080p", Container.WEBM, True, "VP8", "Vorbis"),
    ItagDescriptor(45, "720p", Container.WEBM, True, "VP8", "Vorbis"),
    ItagDescriptor(43, "360p", Container.WEBM, True, "VP8", "Vorbis"),
    ItagDescriptor(37, "1080p", Container.MP4, True, "H264", "AAC"),
    ItagDescriptor(22, "720p", Container.MP4, True, "H264", "AAC"),
    ItagDescriptor(18, "360p", Container.MP4, True, "H264", "AAC"),
    # DASHは音声が別ファイル
    ItagDescriptor(137, "1080p", Container.MP4_DASH, False, "H264", None),
    ItagDescriptor(136, "720p", Container.MP4_DASH, False, "H264", None),
    ItagDescriptor(135, "480p", Container.MP4_DASH, False, "H264", None),
    ItagDescriptor(134, "360p", Container.MP4_DASH, False, "H264", None),
    ItagDescriptor(34, "360p", Container.FLV, True, "H264", "AAC"),
)

ITAG_CATALOG: dict[int, ItagDescriptor] = {entry.itag: entry for entry in _CATALOG}


def lookup_itag(code: int) -> ItagDescriptor:
    """
    itag コードから記述子を取得

    Raises:
        UnknownItag: カタログにないコード
    """
    try:
        return ITAG_CATALOG[int(code)]
    except (KeyError, ValueError, TypeError) as e:
        raise UnknownItag(f"未知のitagです: {code}") from e


def itag_for(resolution: str, container: Container) -> ItagDescriptor:
    """解像度とコンテナからカタログの記述子を逆引きする"""
    for entry in _CATALOG:
        if entry.resolution == resolution and entry.container is container:
            return entry
    raise UnknownItag(f"カタログに該当するitagがありません: {resolution} / {container.value}")
