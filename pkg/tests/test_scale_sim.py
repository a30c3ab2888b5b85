"""
解像度スケーリングとMAPEのテスト
"""
import numpy as np
import pytest

from analysis.scale_sim import (
    ScalePair,
    evaluate_pairs,
    mape,
    rescale,
    scale_trace,
    simulate_resolution,
    summarize_mape,
)
from traces.trace_core import BitrateTrace, pearson, trace_stats
from utils.errors import EmptyInput, InvalidParameterError, LengthMismatch, ZeroMeanTrace


def trace(values, interval=1.0):
    return BitrateTrace.from_values(values, interval=interval)


class TestScaleTrace:

    def test_upscale(self):
        assert scale_trace(ScalePair(trace([2, 4, 6]), 8.0)).values == pytest.approx((4, 8, 12))

    def test_downscale(self):
        assert rescale(trace([4, 8, 12]), 4.0).values == pytest.approx((2, 4, 6))

    def test_own_mean_is_identity(self):
        original = trace([1.5, 9.0, 3.25])
        assert rescale(original, original.mean_kbps).values == pytest.approx(original.values)

    def test_round_trip_and_shape(self):
        original = trace(np.random.default_rng(11).uniform(10, 500, size=180))
        up = rescale(original, 2500.0)
        assert up.mean_kbps == pytest.approx(2500.0)
        assert rescale(up, original.mean_kbps).values == pytest.approx(original.values, rel=1e-9)
        assert pearson(original, up) == pytest.approx(1.0)
        assert trace_stats(up).burstiness == pytest.approx(trace_stats(original).burstiness, rel=1e-12)

    def test_shape_preserved_for_random_traces(self):
        for seed in range(1000):
            rng = np.random.default_rng(seed)
            original = trace(rng.uniform(1, 5000, size=int(rng.integers(2, 400))))
            scaled = scale_trace(ScalePair(original, float(rng.uniform(50, 20000))))
            assert pearson(original, scaled) == pytest.approx(1.0, abs=1e-12)

    def test_invalid(self):
        with pytest.raises(ZeroMeanTrace):
            ScalePair(trace([0, 0]), 5.0)
        with pytest.raises(InvalidParameterError):
            ScalePair(trace([1, 2]), 0.0)


class TestMape:

    def test_identity(self):
        t = trace([2, 4, 6])
        assert mape(t, t) == 0.0

    def test_hand_cases(self):
        assert mape(trace([2, 4, 6]), trace([3, 3, 6])) == pytest.approx(100 / 6, abs=1e-9)
        assert mape(trace([2, 4, 6]), trace([4, 8, 12])) == pytest.approx(100.0, abs=1e-9)

    def test_errors(self):
        with pytest.raises(LengthMismatch):
            mape(trace([1, 2]), trace([1, 2, 3]))
        with pytest.raises(ZeroMeanTrace):
            mape(trace([0, 0]), trace([1, 1]))

    def test_up_and_down_are_symmetric(self):
        rng = np.random.default_rng(99)
        for _ in range(1000):
            n = int(rng.integers(2, 60))
            a = trace(rng.uniform(1, 1000, size=n))
            b = trace(rng.uniform(1, 1000, size=n))
            up = mape(b, rescale(a, b.mean_kbps))
            down = mape(a, rescale(b, a.mean_kbps))
            assert up == pytest.approx(down, rel=1e-9)


class TestSimulateResolution:

    def test_proportional_reference(self):
        orig = trace([100, 300, 200, 50])
        report = simulate_resolution(orig, trace([250, 750, 500, 125]))
        assert report.mape == pytest.approx(0.0, abs=1e-9)
        assert report.pearson == pytest.approx(1.0)
        assert report.warnings == ()

    def test_constant_orig(self):
        reference = trace([100, 300, 200])
        report = simulate_resolution(trace([5, 5, 5]), reference)
        deviation = np.mean(np.abs(np.array([100, 300, 200]) - 200.0))
        assert report.mape == pytest.approx(deviation / 200.0 * 100)
        assert report.pearson is None
        assert report.warnings

    def test_truncates_and_uses_common_prefix(self):
        orig = trace([100.0] * 300)
        reference = trace([200.0] * 150)
        report = simulate_resolution(orig, reference, cutoff=180.0)
        assert report.n == 150
        assert len(report.scaled) == 150
        assert any("150" in message for message in report.warnings)

    def test_interval_mismatch(self):
        with pytest.raises(InvalidParameterError):
            simulate_resolution(trace([1, 2]), trace([1, 2], interval=2.0))

    def test_zero_mean_reference(self):
        with pytest.raises(ZeroMeanTrace):
            simulate_resolution(trace([1, 2]), trace([0, 0]))


def test_evaluate_pairs_skips_unusable_pairs():
    pairs = [
        (trace([1, 2, 3]), trace([2, 4, 6])),
        (trace([0, 0, 0]), trace([2, 4, 6])),
        (trace([1, 2, 3]), trace([3, 3, 3])),
    ]
    reports, summary = evaluate_pairs(pairs, label="360p->720p")
    assert len(reports) == 2
    assert summary.n == 2
    assert summary.label == "360p->720p"
    assert summary.mean == pytest.approx(np.mean([r.mape for r in reports]))


def test_summarize_mape():
    summary = summarize_mape([10.0] * 19 + [30.0])
    assert summary.mean == pytest.approx(11.0)
    assert summary.p95 == pytest.approx(np.percentile([10.0] * 19 + [30.0], 95))
    with pytest.raises(EmptyInput):
        summarize_mape([])
