"""
チャートサービス（スタブ）
合成コーパスから人気度（Zipf）に従って地域ごとの上位チャートを返す
"""
import zlib
from typing import Sequence

import numpy as np

from config.constants import ZIPF_EXPONENT
from synth.corpus_synth import SyntheticVideo
from utils.errors import InvalidParameterError, NoEligibleVideos
from utils.logger import get_logger

logger = get_logger(__name__)

DEFAULT_LOCATION = "global"


def zipf_weights(n: int, s: float = ZIPF_EXPONENT) -> np.ndarray:
    """順位 r (1..n) の重み 1 / r^s を正規化したもの"""
    ranks = np.arange(1, n + 1, dtype=float)
    weights = ranks ** (-s)
    return weights / weights.sum()


class ChartService:
    """チャートサービスのスタブ"""

    def __init__(self, videos: Sequence[SyntheticVideo], zipf_s: float = ZIPF_EXPONENT, seed: int = 0):
        if zipf_s < 0:
            raise InvalidParameterError(f"zipf_s は0以上である必要があります: {zipf_s}")
        self.seed = int(seed)
        self.zipf_s = zipf_s
        # 人気順位はシードで固定（動画IDの昇順を並べ替える）
        ordered = sorted(videos, key=lambda v: v.video_id)
        permutation = np.random.default_rng(np.random.SeedSequence([self.seed, 0])).permutation(len(ordered))
        self.ranked = [ordered[i] for i in permutation]
        self.weights = zipf_weights(len(self.ranked), zipf_s) if self.ranked else np.array([])

    def __len__(self) -> int:
        return len(self.ranked)

    def charts(self, location: str = DEFAULT_LOCATION, cycle: int = 0, n: int = 20) -> list[SyntheticVideo]:
        """
        地域・サイクルごとの上位 n 件のチャート

        人気度の重みで重複なしに抽出し、人気順位の順に並べる。同じ (seed, cycle, location) なら同じ結果。

        Args:
            location: 地域名
            cycle: サイクル番号
            n: 件数

        Returns:
            list[SyntheticVideo]: チャート（人気順）
        """
        if not self.ranked:
            raise NoEligibleVideos("チャートに載せる動画がありません")
        if n < 1:
            raise InvalidParameterError(f"チャートの件数は1以上である必要があります: {n}")
        size = min(n, len(self.ranked))
        rng = np.random.default_rng(np.random.SeedSequence([self.seed, int(cycle) + 1, zlib.crc32(location.encode("utf-8"))]))
        picked = np.sort(rng.choice(len(self.ranked), size=size, replace=False, p=self.weights))
        logger.debug(f"チャートを作成しました: location={location} cycle={cycle} n={size}")
        return [self.ranked[i] for i in picked]
