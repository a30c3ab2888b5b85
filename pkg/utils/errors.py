"""
例外定義モジュール
すべてのドメイン例外は VideoMeasureError を基底とする（CLIは終了コード2に変換する）
"""
from typing import Optional


class VideoMeasureError(Exception):
    """ツールキット共通の基底例外"""


class InvalidParameterError(VideoMeasureError, ValueError):
    """事前条件（引数の範囲など）を満たさない"""


# --- フレームログ / トレース ---

class EmptyLog(VideoMeasureError):
    """フレームが1つもないフレームログ"""


class MalformedLog(VideoMeasureError):
    """フレームログの不変条件違反（pts の逆行、負の値など）"""


class EmptyTrace(VideoMeasureError):
    """値が1つもないビットレートトレース"""


class LengthMismatch(VideoMeasureError):
    """比較する2つのトレースの長さが異なる"""


class UndefinedCorrelation(VideoMeasureError):
    """定数トレースなど、相関係数が定義できない"""


class ZeroMeanTrace(VideoMeasureError):
    """平均ビットレートが0のトレース（スケーリング・MAPE・バースト性が定義できない）"""


class UnknownItag(VideoMeasureError):
    """カタログに存在しない itag"""


# --- 入出力 ---

class SchemaError(VideoMeasureError):
    """CSVヘッダがスキーマと一致しない"""


class ParseError(VideoMeasureError):
    """CSVセルの解析に失敗した"""

    def __init__(self, line: int, message: str = ""):
        self.line = line
        super().__init__(f"{line}行目: {message}" if message else f"{line}行目の解析に失敗しました")


class Mp4ParseError(VideoMeasureError):
    """MP4解析エラーの基底"""


class TruncatedBox(Mp4ParseError):
    """ボックスが入力の残りより長い、またはヘッダが途中で切れている"""

    def __init__(self, offset: int, message: str = ""):
        self.offset = offset
        super().__init__(f"offset={offset}: {message or 'ボックスが途中で切れています'}")


class NoVideoTrack(Mp4ParseError):
    """映像トラック（またはそのサンプルテーブル）が見つからない"""


class InconsistentSampleTable(Mp4ParseError):
    """サンプル数・サイズ・時間テーブルの不整合"""


# --- 分布フィット ---

class NonPositiveSample(VideoMeasureError):
    """対数正規フィットに0以下の標本が含まれている"""


class EmptyInput(VideoMeasureError):
    """標本が空"""


class DomainError(VideoMeasureError):
    """確率が (0, 1) の範囲外"""


# --- コーパス / 計測サイクル ---

class ProfileError(VideoMeasureError):
    """母集団プロファイルの設定不備"""


class ConfigError(VideoMeasureError):
    """計測サイクル設定の不備（サイクルを中断する唯一のエラー）"""


class NoEligibleVideos(VideoMeasureError):
    """MINLENGTH 以上の動画がチャートに存在しない"""


class VideoNotFound(VideoMeasureError):
    """指定された動画IDがコーパスに存在しない"""


# --- トラフィック生成サーバ ---

class NotFound(VideoMeasureError):
    """カタログに存在しない動画ID"""


class BadRequest(VideoMeasureError):
    """不正なリクエストパラメータ"""

    def __init__(self, message: str, parameter: Optional[str] = None):
        self.parameter = parameter
        super().__init__(message)
