"""
再生シミュレーションのテスト
"""
from bisect import bisect_right

import numpy as np
import pytest

from conftest import constant_trace
from playout.playout_sim import LinkModel, PlayerConfig, simulate_download
from traces.trace_core import BitrateTrace
from utils.errors import InvalidParameterError

STEP = 0.001


def brute_force(values, link_kbps, initial_buffer, rebuffer_target, interval=1.0, timeout=600.0):
    """
    1ms刻みで同じ方針を再現する離散シミュレーション

    刻みの中で状態が切り替わる時刻はその刻みの中で解く（ダウンロードは刻み内で線形）。
    停止の (開始メディア時間, 長さ) のリストと完了時の壁時計時間を返す。
    """
    times = [k * interval for k in range(len(values) + 1)]
    cumulative = [0.0]
    for value in values:
        cumulative.append(cumulative[-1] + value * interval)
    total = cumulative[-1]
    duration = times[-1]

    def frontier(bits):
        if bits >= total:
            return duration
        k = bisect_right(cumulative, bits) - 1
        return times[k] + (bits - cumulative[k]) / values[k]

    def bits_until(position):
        if position >= duration:
            return total
        k = bisect_right(times, position) - 1
        return cumulative[k] + values[k] * (position - times[k])

    downloaded = 0.0
    tau = 0.0
    t = 0.0
    step_end = STEP
    state = "startup"
    stalls = []
    stall_start = (0.0, 0.0)
    while t < timeout:
        dt = max(0.0, step_end - t)
        if state in ("startup", "stalled"):
            anchor = initial_buffer if state == "startup" else stall_start[0] + rebuffer_target
            need = bits_until(min(anchor, duration))
            if downloaded + link_kbps * dt >= need:
                t += max(0.0, need - downloaded) / link_kbps
                downloaded = max(downloaded, need)
                if state == "stalled":
                    stalls.append((stall_start[0], t - stall_start[1]))
                state = "playing"
                continue
            downloaded += link_kbps * dt
        elif state == "tracking":
            k = bisect_right(times, tau + 1e-12)
            boundary_bits = cumulative[k]
            if downloaded + link_kbps * dt >= boundary_bits:
                t += max(0.0, boundary_bits - downloaded) / link_kbps
                downloaded = boundary_bits
                tau = times[k]
                if k == len(values) or values[k] <= link_kbps:
                    stalls.append((stall_start[0], (t - stall_start[1]) - (tau - stall_start[0])))
                    state = "playing"
                continue
            downloaded += link_kbps * dt
            tau = frontier(downloaded)
        else:
            if tau >= duration - 1e-9:
                return [s for s in stalls if s[1] > 1e-9], t
            span = min(dt, duration - tau)

            def lead(s):
                return frontier(min(total, downloaded + link_kbps * s)) - (tau + s)

            if lead(span) < -1e-12:
                low, high = 0.0, span
                for _ in range(60):
                    mid = (low + high) / 2
                    if lead(mid) >= 0:
                        low = mid
                    else:
                        high = mid
                t += low
                downloaded = min(total, downloaded + link_kbps * low)
                tau += low
                stall_start = (tau, t)
                state = "stalled" if rebuffer_target > 0 else "tracking"
                continue
            tau += span
            downloaded = min(total, downloaded + link_kbps * span)
            if span < dt:
                t += span
                continue
        t = step_end
        step_end += STEP
    raise AssertionError("brute force did not finish")


class TestWorkedExamples:

    def test_fast_link(self, worked_example_media):
        result = simulate_download(worked_example_media, LinkModel.constant(2000.0), PlayerConfig(initial_buffer=2.0))
        assert result.startup_delay == pytest.approx(1.0)
        assert result.stall_count == 0
        assert result.completed
        assert result.all_frames_on_time
        assert result.downloaded_bytes == 1_250_000

    def test_exact_rate_match(self, worked_example_media):
        result = simulate_download(worked_example_media, LinkModel.constant(1000.0), PlayerConfig(initial_buffer=0.0))
        assert result.stall_count == 0
        assert result.total_stall == 0.0
        assert result.completed

    def test_slow_link_tracking_playback(self, worked_example_media):
        cfg = PlayerConfig(initial_buffer=2.0, rebuffer_target=0.0)
        result = simulate_download(worked_example_media, LinkModel.constant(500.0), cfg)
        assert result.startup_delay == pytest.approx(4.0)
        assert result.total_stall == pytest.approx(6.0)
        assert result.wall_time == pytest.approx(20.0)
        assert result.completed
        assert not result.all_frames_on_time

    def test_slow_link_with_rebuffering(self, worked_example_media):
        cfg = PlayerConfig(initial_buffer=2.0, rebuffer_target=2.0)
        result = simulate_download(worked_example_media, LinkModel.constant(500.0), cfg)
        assert result.startup_delay == pytest.approx(4.0)
        assert [(e.start, e.duration) for e in result.stall_events] == [
            pytest.approx((4.0, 4.0)), pytest.approx((8.0, 4.0)),
        ]
        assert result.total_stall == pytest.approx(8.0)
        assert result.wall_time == pytest.approx(22.0)

    def test_start_latency(self, worked_example_media):
        result = simulate_download(worked_example_media, LinkModel.constant(2000.0, start_latency=0.5))
        assert result.startup_delay == pytest.approx(1.5)

    def test_cutoff_applied(self):
        result = simulate_download(constant_trace(100.0, 600), LinkModel.constant(1000.0))
        assert result.media_duration == 180.0
        assert result.downloaded_bytes == 180 * 100 * 125

    def test_zero_capacity_times_out(self, worked_example_media):
        result = simulate_download(worked_example_media, LinkModel.constant(0.0), PlayerConfig(timeout=30.0))
        assert result.timed_out
        assert not result.completed
        assert result.startup_delay is None
        assert result.downloaded_bytes == 0

    def test_capacity_trace(self):
        media = constant_trace(1000.0, 6)
        link = LinkModel(capacity_trace=BitrateTrace.from_values([2000.0, 0.0, 0.0, 2000.0]))
        result = simulate_download(media, link, PlayerConfig(initial_buffer=1.0, rebuffer_target=1.0))
        assert result.startup_delay == pytest.approx(0.5)
        assert result.stall_count == 1
        assert result.stall_events[0].start == pytest.approx(2.0)
        assert result.total_stall == pytest.approx(1.0)
        assert result.completed


class TestProperties:

    def test_events_ordered_and_summed(self):
        rng = np.random.default_rng(8)
        media = BitrateTrace.from_values(rng.uniform(200, 2000, size=40))
        result = simulate_download(media, LinkModel.constant(800.0))
        starts = [event.start for event in result.stall_events]
        assert starts == sorted(starts)
        assert result.total_stall == pytest.approx(sum(e.duration for e in result.stall_events))

    def test_conservation(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            media = BitrateTrace.from_values(rng.uniform(100, 3000, size=30))
            capacity = float(rng.uniform(200, 3000))
            result = simulate_download(media, LinkModel.constant(capacity))
            assert result.downloaded_bytes <= capacity * result.wall_time * 125 + 1
            assert result.completed
            assert result.downloaded_bytes == pytest.approx(sum(media.values) * 125, abs=1)

    def test_capacity_above_media_never_stalls(self):
        rng = np.random.default_rng(6)
        for _ in range(20):
            values = rng.uniform(100, 2000, size=30)
            media = BitrateTrace.from_values(values)
            link = LinkModel(capacity_trace=BitrateTrace.from_values(values * rng.uniform(1.0, 2.0, size=30)))
            assert simulate_download(media, link, PlayerConfig(initial_buffer=0.0)).stall_count == 0

    def test_more_capacity_never_more_stall(self):
        rng = np.random.default_rng(12)
        for _ in range(20):
            media = BitrateTrace.from_values(rng.uniform(500, 1500, size=60))
            stalls = [
                simulate_download(media, LinkModel.constant(kbps)).total_stall
                for kbps in (250.0, 500.0, 1000.0, 2000.0)
            ]
            assert all(b <= a + 1e-6 for a, b in zip(stalls, stalls[1:]))

    @pytest.mark.parametrize("rebuffer_target", [0.0, 2.0])
    def test_worked_example_matches_brute_force(self, worked_example_media, rebuffer_target):
        cfg = PlayerConfig(initial_buffer=2.0, rebuffer_target=rebuffer_target)
        result = simulate_download(worked_example_media, LinkModel.constant(500.0), cfg)
        expected, wall = brute_force([1000.0] * 10, 500.0, 2.0, rebuffer_target)
        if rebuffer_target == 0.0:
            assert expected == [pytest.approx((4.0, 6.0))]
            assert wall == pytest.approx(20.0)
        assert [(e.start, e.duration) for e in result.stall_events] == [pytest.approx(s, abs=0.001) for s in expected]
        assert result.wall_time == pytest.approx(wall, abs=0.001)

    @pytest.mark.slow
    def test_matches_brute_force(self):
        rng = np.random.default_rng(2023)
        for case in range(120):
            values = rng.uniform(200, 2000, size=10).tolist()
            link_kbps = float(rng.uniform(300, 1500))
            initial_buffer = float(rng.uniform(0.5, 3.0))
            rebuffer_target = 0.0 if case % 3 == 0 else float(rng.uniform(0.5, 3.0))
            cfg = PlayerConfig(initial_buffer=initial_buffer, rebuffer_target=rebuffer_target)
            result = simulate_download(BitrateTrace.from_values(values), LinkModel.constant(link_kbps), cfg)
            expected, wall = brute_force(values, link_kbps, initial_buffer, rebuffer_target)
            assert result.stall_count == len(expected)
            for event, (start, duration) in zip(result.stall_events, expected):
                assert event.start == pytest.approx(start, abs=0.001)
                assert event.duration == pytest.approx(duration, abs=0.001)
            assert result.wall_time == pytest.approx(wall, abs=0.001)


class TestValidation:

    def test_link_requires_exactly_one_capacity(self):
        with pytest.raises(InvalidParameterError):
            LinkModel()
        with pytest.raises(InvalidParameterError):
            LinkModel(capacity_kbps=1.0, capacity_trace=BitrateTrace.from_values([1.0]))
        with pytest.raises(InvalidParameterError):
            LinkModel.constant(-1.0)

    def test_interval_mismatch(self, worked_example_media):
        link = LinkModel(capacity_trace=BitrateTrace.from_values([1000.0], interval=0.5))
        with pytest.raises(InvalidParameterError):
            simulate_download(worked_example_media, link)

    def test_player_config(self):
        with pytest.raises(InvalidParameterError):
            PlayerConfig(initial_buffer=-1.0)
        with pytest.raises(InvalidParameterError):
            PlayerConfig(cutoff=0.0)
        assert PlayerConfig(initial_buffer=3.0).resume_target == 3.0
