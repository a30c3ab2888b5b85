"""
分布フィットモジュール
動画の長さ・ファイルサイズの対数正規フィットと適合度（KS統計量）
"""
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import stats

from utils.errors import DomainError, EmptyInput, NonPositiveSample
from utils.logger import get_logger

logger = get_logger(__name__)


@dataclass(frozen=True)
class LognormalFit:
    """対数正規分布のパラメータ（ln X ~ N(meanlog, sdlog^2)）"""
    meanlog: float
    sdlog: float
    n: int = 1

    def __post_init__(self):
        if self.sdlog < 0:
            raise DomainError(f"sdlogは0以上である必要があります: {self.sdlog}")
        if self.n < 1:
            raise EmptyInput(f"標本数は1以上である必要があります: {self.n}")

    @property
    def median(self) -> float:
        return math.exp(self.meanlog)

    def as_tuple(self) -> tuple[float, float]:
        return (self.meanlog, self.sdlog)


@dataclass(frozen=True)
class EcdfTable:
    """経験分布関数（昇順の値と累積確率 i/n）"""
    values: tuple[float, ...]
    probabilities: tuple[float, ...]

    def __iter__(self):
        return iter(zip(self.values, self.probabilities))

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class SampleSummary:
    """標本の要約（標本数・中央値・平均・最大・標準偏差とフィット）"""
    n: int
    median: float
    mean: float
    maximum: float
    stddev: float
    fit: LognormalFit


def _log_samples(samples: Sequence[float]) -> np.ndarray:
    values = np.asarray(samples, dtype=float)
    if values.size == 0:
        raise EmptyInput("標本が空です")
    if np.any(~(values > 0)):
        bad = values[~(values > 0)][0]
        raise NonPositiveSample(f"0以下の標本が含まれています: {bad}")
    return np.log(values)


def fit_lognormal(samples: Sequence[float]) -> LognormalFit:
    """
    対数正規分布を最尤推定でフィット

    Args:
        samples: 正の標本

    Returns:
        LognormalFit: meanlog = ln(標本) の平均, sdlog = ln(標本) の母標準偏差

    Raises:
        EmptyInput: 標本が空
        NonPositiveSample: 0以下の標本を含む
    """
    logs = _log_samples(samples)
    fit = LognormalFit(meanlog=float(np.mean(logs)), sdlog=float(np.std(logs)), n=int(logs.size))
    logger.debug(f"対数正規フィット: meanlog={fit.meanlog:.4f} sdlog={fit.sdlog:.4f} n={fit.n}")
    return fit


def lognormal_quantile(p: float, fit: LognormalFit) -> float:
    """
    対数正規分布の分位点 exp(meanlog + sdlog * Φ^-1(p))

    Raises:
        DomainError: p が (0, 1) の範囲外
    """
    if not 0.0 < p < 1.0:
        raise DomainError(f"確率は (0, 1) の範囲である必要があります: {p}")
    if fit.sdlog == 0:
        return math.exp(fit.meanlog)
    return float(math.exp(fit.meanlog + fit.sdlog * stats.norm.ppf(p)))


def lognormal_cdf(x, fit: LognormalFit):
    """モデルの累積分布関数（sdlog=0 のときは中央値での階段関数）"""
    values = np.asarray(x, dtype=float)
    if fit.sdlog == 0:
        result = np.where(values >= fit.median, 1.0, 0.0)
    else:
        result = stats.lognorm.cdf(values, s=fit.sdlog, scale=fit.median)
    return float(result) if np.ndim(result) == 0 else result


def lognormal_mean(fit: LognormalFit) -> float:
    """モデルの平均 exp(meanlog + sdlog^2 / 2)"""
    return math.exp(fit.meanlog + fit.sdlog ** 2 / 2.0)


def tail_probability(threshold: float, fit: LognormalFit) -> float:
    """P(X > threshold)"""
    if threshold <= 0:
        return 1.0
    return 1.0 - float(lognormal_cdf(threshold, fit))


def ecdf(samples: Sequence[float]) -> EcdfTable:
    """
    経験分布関数

    同じ値が並ぶ場合も順位 i/n をそのまま付ける（最後の重複が上の段を持つ）。
    """
    values = np.sort(np.asarray(samples, dtype=float))
    if values.size == 0:
        raise EmptyInput("標本が空です")
    n = values.size
    probabilities = np.arange(1, n + 1) / n
    return EcdfTable(values=tuple(values.tolist()), probabilities=tuple(probabilities.tolist()))


def ks_statistic(samples: Sequence[float], fit: LognormalFit) -> float:
    """
    コルモゴロフ・スミルノフ統計量 D（両側、階段関数の上下両端で評価）

    p値は計算しない（パラメータを推定しているため標準の分布に従わない）。
    """
    logs = np.sort(_log_samples(samples))
    n = logs.size
    model = np.asarray(lognormal_cdf(np.exp(logs), fit), dtype=float)
    upper = np.arange(1, n + 1) / n - model
    lower = model - np.arange(0, n) / n
    return float(max(np.max(upper), np.max(lower), 0.0))


def describe_sample(samples: Sequence[float]) -> SampleSummary:
    """標本の要約統計と対数正規フィットをまとめて返す"""
    fit = fit_lognormal(samples)
    values = np.asarray(samples, dtype=float)
    return SampleSummary(
        n=int(values.size),
        median=float(np.median(values)),
        mean=float(np.mean(values)),
        maximum=float(np.max(values)),
        stddev=float(np.std(values)),
        fit=fit,
    )
