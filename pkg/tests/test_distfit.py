"""
対数正規フィットのテスト
"""
import math

import numpy as np
import pytest
from scipy import stats

from analysis.distfit import (
    LognormalFit,
    describe_sample,
    ecdf,
    fit_lognormal,
    ks_statistic,
    lognormal_cdf,
    lognormal_mean,
    lognormal_quantile,
    tail_probability,
)
from utils.errors import DomainError, EmptyInput, NonPositiveSample

DURATION_FIT = LognormalFit(meanlog=5.16, sdlog=1.31)


class TestFit:

    def test_constant_sample(self):
        fit = fit_lognormal([math.e ** 2] * 5)
        assert fit.meanlog == pytest.approx(2.0)
        assert fit.sdlog == pytest.approx(0.0, abs=1e-12)

    def test_two_points(self):
        fit = fit_lognormal([math.e, math.e ** 3])
        assert fit.as_tuple() == pytest.approx((2.0, 1.0))
        assert fit.n == 2

    @pytest.mark.parametrize("meanlog,sdlog", [(5.16, 1.31), (1.0, 0.5), (6.0, 2.0)])
    def test_recovers_parameters(self, meanlog, sdlog):
        draws = np.random.default_rng(42).lognormal(meanlog, sdlog, size=100_000)
        fit = fit_lognormal(draws)
        assert fit.meanlog == pytest.approx(meanlog, abs=0.02)
        assert fit.sdlog == pytest.approx(sdlog, abs=0.02)

    def test_scale_equivariant(self):
        samples = np.random.default_rng(7).lognormal(3.0, 0.8, size=500)
        base = fit_lognormal(samples)
        scaled = fit_lognormal(samples * 20.0)
        assert scaled.meanlog == pytest.approx(base.meanlog + math.log(20.0), abs=1e-9)
        assert scaled.sdlog == pytest.approx(base.sdlog, abs=1e-9)

    def test_errors(self):
        with pytest.raises(EmptyInput):
            fit_lognormal([])
        with pytest.raises(NonPositiveSample):
            fit_lognormal([1.0, 0.0])
        with pytest.raises(NonPositiveSample):
            fit_lognormal([1.0, float("nan")])
        with pytest.raises(DomainError):
            LognormalFit(meanlog=0.0, sdlog=-1.0)


class TestQuantile:

    def test_model_median(self):
        assert lognormal_quantile(0.5, DURATION_FIT) == pytest.approx(174.16, abs=0.01)
        assert DURATION_FIT.median == pytest.approx(174.16, abs=0.01)

    def test_interquartile_range(self):
        assert lognormal_quantile(0.25, DURATION_FIT) == pytest.approx(72.0, abs=0.1)
        assert lognormal_quantile(0.75, DURATION_FIT) == pytest.approx(421.4, abs=0.1)

    def test_degenerate(self):
        assert lognormal_quantile(0.9, LognormalFit(meanlog=1.5, sdlog=0.0)) == pytest.approx(math.exp(1.5))

    def test_strictly_increasing(self):
        values = [lognormal_quantile(p, DURATION_FIT) for p in np.linspace(0.01, 0.99, 50)]
        assert all(b > a for a, b in zip(values, values[1:]))

    @pytest.mark.parametrize("p", [0.0, 1.0, -0.1, 1.5])
    def test_domain(self, p):
        with pytest.raises(DomainError):
            lognormal_quantile(p, DURATION_FIT)

    def test_tail_and_mean(self):
        assert tail_probability(600.0, DURATION_FIT) == pytest.approx(0.173, abs=0.002)
        assert tail_probability(0.0, DURATION_FIT) == 1.0
        assert lognormal_mean(DURATION_FIT) == pytest.approx(stats.lognorm.mean(s=1.31, scale=math.exp(5.16)))

    def test_cdf_inverts_quantile(self):
        for p in (0.1, 0.5, 0.9):
            assert lognormal_cdf(lognormal_quantile(p, DURATION_FIT), DURATION_FIT) == pytest.approx(p)


class TestKolmogorovSmirnov:

    def test_model_quantiles(self):
        n = 1000
        samples = [lognormal_quantile((i - 0.5) / n, DURATION_FIT) for i in range(1, n + 1)]
        assert ks_statistic(samples, DURATION_FIT) <= 0.001 + 1e-12

    def test_single_sample_at_median(self):
        assert ks_statistic([DURATION_FIT.median], DURATION_FIT) == pytest.approx(0.5)

    def test_total_mismatch(self):
        tiny = lognormal_quantile(0.01, DURATION_FIT) / 1000
        assert ks_statistic([tiny, tiny * 2, tiny * 3], DURATION_FIT) >= 0.99

    def test_scale_invariant(self):
        samples = np.random.default_rng(5).lognormal(5.0, 1.2, size=300)
        base = ks_statistic(samples, DURATION_FIT)
        shifted = LognormalFit(meanlog=DURATION_FIT.meanlog + math.log(3.0), sdlog=DURATION_FIT.sdlog)
        assert ks_statistic(samples * 3.0, shifted) == pytest.approx(base, abs=1e-9)


class TestEcdf:

    def test_ranks(self):
        assert list(ecdf([3, 1, 2])) == pytest.approx([(1, 1 / 3), (2, 2 / 3), (3, 1.0)])

    def test_single_and_ties(self):
        assert list(ecdf([7.5])) == [(7.5, 1.0)]
        assert list(ecdf([2, 2])) == [(2.0, 0.5), (2.0, 1.0)]

    def test_empty(self):
        with pytest.raises(EmptyInput):
            ecdf([])


def test_describe_sample():
    summary = describe_sample([1.0, 2.0, 4.0])
    assert summary.n == 3
    assert summary.median == 2.0
    assert summary.maximum == 4.0
    assert summary.fit.meanlog == pytest.approx(math.log(2.0))
