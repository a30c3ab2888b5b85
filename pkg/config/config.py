"""
設定管理モジュール
環境変数の読み込みとアプリケーション設定の管理
"""
import os
from pathlib import Path
from typing import Optional
from dotenv import load_dotenv

from .constants import (
    PROJECT_ROOT,
    OUTPUT_DIR,
    TRACE_INTERVAL,
    CUTOFF_SECONDS,
    LISTEN_ADDRESS,
    LOG_DIR,
    LOG_LEVEL,
)


def _env_bool(name: str, default: bool) -> bool:
    """環境変数を真偽値として読む"""
    value = os.getenv(name)
    if value is None:
        return default
    return value.strip().lower() in ("1", "true", "yes", "on")


class Config:
    """アプリケーション設定クラス"""

    def __init__(self, env_path: Optional[Path] = None):
        # .envファイルがあれば読み込む（無くても既定値で動作する）
        env_path = env_path or PROJECT_ROOT / ".env"
        if env_path.exists():
            load_dotenv(env_path)

        # トレース設定
        self.trace_interval: float = float(os.getenv("TRACE_INTERVAL", TRACE_INTERVAL))
        self.cutoff_seconds: float = float(os.getenv("CUTOFF_SECONDS", CUTOFF_SECONDS))
        self.default_seed: int = int(os.getenv("DEFAULT_SEED", 0))

        # トラフィック生成サーバの待ち受けアドレス
        self.listen_address: str = os.getenv("LISTEN_ADDRESS", LISTEN_ADDRESS)

        # 出力ディレクトリ（環境変数から読み込む、なければデフォルト値）
        output_base_dir = os.getenv("OUTPUT_BASE_DIR", str(OUTPUT_DIR))
        self.output_dir = Path(output_base_dir)
        self.output_corpus_dir = self.output_dir / "corpus"
        self.output_reports_dir = self.output_dir / "reports"

        # ログ設定
        self.log_dir = Path(os.getenv("LOG_DIR", str(LOG_DIR)))
        self.log_level = os.getenv("LOG_LEVEL", LOG_LEVEL)
        self.log_to_file = _env_bool("LOG_TO_FILE", True)

        if self.log_to_file:
            self.log_dir.mkdir(parents=True, exist_ok=True)


# グローバル設定インスタンス
config = Config()
