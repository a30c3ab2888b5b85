"""
定数定義
"""
import math
from pathlib import Path

# プロジェクトルートディレクトリ
PROJECT_ROOT = Path(__file__).parent.parent

# 出力ディレクトリ
OUTPUT_DIR = PROJECT_ROOT / "output"

# トレース設定
TRACE_INTERVAL = 1.0  # 秒（瞬時ビットレートの集計区間）
CUTOFF_SECONDS = 180.0  # 3分カットオフ
PARTIAL_INTERVAL_THRESHOLD = 0.5  # 末尾の部分区間がこの割合未満なら統計から除外
CSV_PTS_DECIMALS = 6

# 再生シミュレーション設定
INITIAL_BUFFER_SECONDS = 2.0
SIMULATION_TIMEOUT_SECONDS = 3600.0

# 計測サイクル設定
MIN_LENGTH_SECONDS = 72.0
TESTS_PER_MA_PER_CYCLE = 3
CYCLE_START_DATE = "2013-09-11"
DURATION_CLASS_EDGES = (72.0, 180.0, 420.0)  # 秒
BITRATE_CLASS_EDGES = (500.0, 1000.0, 2500.0, 5000.0, 7000.0)  # kbps
BURSTINESS_CLASS_EDGES = (0.2, 0.5, 1.0)
ZIPF_EXPONENT = 1.0
LINK_KBPS_RANGE = (500.0, 20000.0)

# 分布フィット（lognormal: meanlog, sdlog）
VIDEO_LENGTH_FIT = (5.16, 1.31)
FILE_SIZE_FITS = {
    ("360p", "mp4"): (2.30, 1.35),
    ("720p", "mp4"): (3.77, 1.32),
    ("1080p", "mp4"): (4.36, 1.32),
    ("360p", "webm"): (2.42, 1.42),
    ("720p", "webm"): (3.80, 1.37),
    ("1080p", "webm"): (4.39, 1.35),
}
# 解像度ごとの可用性（360p に対する割合）
RESOLUTION_AVAILABILITY = {
    "360p": 1.00,
    "720p": 0.485,
    "1080p": 0.210,
}
WEBM_SIZE_SLOPE = 1.05
WEBM_SIZE_NOISE_SD = 0.05
DASH_BITRATE_DELTA = -0.05
DASH_SUBSEGMENT_SECONDS = 5.0
CORRELATION_FLOOR = 0.75
SIZE_DURATION_CORRELATION = 0.9
BITRATE_BOUNDS_KBPS = (100.0, 50000.0)  # 0.1〜50 Mbps
# 先頭3分の平均・バースト性が全体と揃う範囲に収める
BURSTINESS_FIT = (math.log(0.25), 0.4)
RESOLUTION_NOISE_SD = 0.2
AR_COEFFICIENT = 0.8
SEGMENT_SPIKE_FACTOR = 1.5

# カテゴリ（2013年当時のYouTubeカテゴリ）
VIDEO_CATEGORIES = (
    "Autos & Vehicles",
    "Comedy",
    "Education",
    "Entertainment",
    "Film & Animation",
    "Gaming",
    "Howto & Style",
    "Music",
    "News & Politics",
    "Nonprofits & Activism",
    "People & Blogs",
    "Pets & Animals",
    "Science & Technology",
    "Sports",
    "Travel & Events",
)

# トラフィック生成サーバ
LISTEN_ADDRESS = "127.0.0.1:8080"

# ログ設定
LOG_DIR = PROJECT_ROOT / "logs"
LOG_LEVEL = "INFO"
LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
