"""
計測サイクル（コントローラ・MA・リポジトリ）のテスト
"""
import numpy as np
import pytest

from measurement.agent import (
    CollectChartsInstruction,
    MeasurementAgent,
    measure_video,
    run_instruction,
    select_videos,
)
from measurement.chart_service import ChartService, zipf_weights
from measurement.controller import Controller, first_quartile, run_cycle
from measurement.cycle_config import CycleConfig, default_chart_size, load_cycle_config
from measurement.repository import Repository
from playout.playout_sim import LinkModel
from synth.corpus_synth import Rendition, SyntheticVideo, synth_corpus
from traces.trace_core import BitrateTrace
from utils.errors import ConfigError, InvalidParameterError, NoEligibleVideos


@pytest.fixture(scope="module")
def corpus():
    return synth_corpus(60, seed=3)


class TestCycleConfig:

    def test_defaults(self):
        cfg = CycleConfig(num_agents=2000)
        assert cfg.chart_size == 40
        assert CycleConfig(num_agents=10).chart_size == default_chart_size(10) == 20

    def test_load(self, tmp_path):
        path = tmp_path / "cycle.env"
        path.write_text("num_agents=5\nmin_length=90\nduration_edges=60,120\nbusy_agents=1,3\n", encoding="utf-8")
        cfg = load_cycle_config(path, seed=7)
        assert cfg.num_agents == 5
        assert cfg.min_length == 90.0
        assert cfg.duration_edges == (60.0, 120.0)
        assert cfg.busy_agents == (1, 3)
        assert cfg.seed == 7

    def test_unknown_key(self, tmp_path):
        path = tmp_path / "cycle.env"
        path.write_text("num_agents=5\nbogus=1\n", encoding="utf-8")
        with pytest.raises(ConfigError):
            load_cycle_config(path)

    def test_bad_value(self, tmp_path):
        path = tmp_path / "cycle.env"
        path.write_text("num_agents=five\n", encoding="utf-8")
        with pytest.raises(ConfigError):
            load_cycle_config(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_cycle_config(tmp_path / "missing.env")

    def test_min_length_must_be_below_cutoff(self):
        with pytest.raises(ConfigError):
            CycleConfig(min_length=180.0, cutoff=180.0)

    def test_weekly_schedule(self):
        cfg = CycleConfig(start_date="2013-09-11")
        assert cfg.cycle_start(2).isoformat() == "2013-09-25T00:00:00"


class TestCharts:

    def test_zipf_weights(self):
        weights = zipf_weights(3, 1.0)
        assert weights.sum() == pytest.approx(1.0)
        assert weights[0] == pytest.approx(2 * weights[1])

    def test_deterministic_and_sized(self, corpus):
        service = ChartService(corpus, seed=1)
        first = service.charts(cycle=0, n=10)
        assert [v.video_id for v in first] == [v.video_id for v in service.charts(cycle=0, n=10)]
        assert len({v.video_id for v in first}) == 10

    def test_invalid(self, corpus):
        with pytest.raises(NoEligibleVideos):
            ChartService([]).charts()
        with pytest.raises(InvalidParameterError):
            ChartService(corpus).charts(n=0)

    def test_select_videos(self, corpus):
        chart = ChartService(corpus).charts(n=20)
        eligible = select_videos(chart, 20, 100.0)
        assert all(v.duration >= 100.0 for v in eligible)
        with pytest.raises(NoEligibleVideos):
            select_videos(chart, 20, 1e9)


class TestRepository:

    def test_minlength_ignores_candidates_at_cutoff(self):
        repository = Repository(min_length=72.0)
        assert repository.record_minlength(0, 90.0, 180.0)
        assert not repository.record_minlength(1, 200.0, 180.0)
        assert repository.min_length == 90.0
        assert [u.applied for u in repository.min_length_history] == [True, False]

    def test_first_quartile(self):
        assert first_quartile([1.0, 2.0, 3.0, 4.0, 5.0]) == 2.0


class TestCycle:

    def test_record_count(self, corpus):
        cfg = CycleConfig(num_agents=6, chart_size=20, tests_per_ma_per_cycle=3, seed=1, min_length=60.0)
        repository = run_cycle(cfg, corpus)
        assert len(repository) == 18
        assert {r.instruction for r in repository.records} == {1, 2}
        assert all(r.scheduled_at.startswith("2013-09-11") for r in repository.records)

    def test_deterministic(self, corpus):
        cfg = CycleConfig(num_agents=8, chart_size=20, cycles=2, seed=5, min_length=60.0)
        first = run_cycle(cfg, corpus).to_lines()
        second = run_cycle(cfg, corpus).to_lines()
        parallel = run_cycle(cfg.with_overrides(workers=4), corpus).to_lines()
        assert first == second == parallel

    def test_min_length_respected(self, corpus):
        cfg = CycleConfig(num_agents=10, chart_size=25, cycles=3, seed=2, min_length=100.0)
        repository = run_cycle(cfg, corpus)
        assert all(r.video_duration >= 100.0 for r in repository.records)
        assert all(u.value < cfg.cutoff for u in repository.min_length_history)

    def test_distinct_videos_per_cycle_within_chart(self, corpus):
        cfg = CycleConfig(num_agents=30, chart_size=5, cycles=2, seed=4, min_length=30.0)
        repository = run_cycle(cfg, corpus)
        for cycle in range(2):
            assert len({r.video_id for r in repository.records_for_cycle(cycle)}) <= 5

    def test_busy_agents_skip(self, corpus):
        cfg = CycleConfig(num_agents=4, chart_size=20, seed=0, min_length=60.0, busy_agents=(1, 2))
        repository = run_cycle(cfg, corpus)
        assert {r.ma_id for r in repository.records} == {0, 3}

    def test_explicit_links(self, corpus):
        cfg = CycleConfig(num_agents=2, chart_size=20, seed=0, min_length=60.0, tests_per_ma_per_cycle=1)
        links = {0: LinkModel.constant(100_000.0), 1: LinkModel.constant(100_000.0)}
        repository = run_cycle(cfg, corpus, links=links)
        assert all(r.stall_count == 0 for r in repository.records)
        assert all(r.link_kbps == 100_000.0 for r in repository.records)

    def test_missing_link(self, corpus):
        cfg = CycleConfig(num_agents=2, seed=0, min_length=60.0)
        with pytest.raises(ConfigError):
            Controller(cfg, corpus, links={0: LinkModel.constant(1000.0)})

    def test_idle_agent_runs_collect_instruction(self, corpus):
        cfg = CycleConfig(num_agents=1, chart_size=20, seed=0, min_length=60.0)
        controller = Controller(cfg, corpus)
        agent = MeasurementAgent(ma_id=0, link=LinkModel.constant(5000.0))
        record = run_instruction(agent, CollectChartsInstruction(cycle=0, chart_size=20, min_length=60.0),
                                 controller.context)
        assert record.instruction == 1
        assert agent.sequence == 1

    def test_record_stats_cover_only_tested_media(self):
        trace = BitrateTrace.from_values([100.0] * 180 + [900.0] * 420)
        video = SyntheticVideo(video_id="long", duration=600.0, category="Music", burstiness=0.5,
                               renditions={"360p": Rendition("360p", True, mean_kbps=660.0, trace=trace)})
        controller = Controller(CycleConfig(num_agents=1, seed=0, min_length=60.0), [video])
        agent = MeasurementAgent(ma_id=0, link=LinkModel.constant(100_000.0))
        record = measure_video(agent, video, controller.context, instruction=2, cycle=0)
        assert record.mean_kbps == pytest.approx(100.0)
        assert record.burstiness == pytest.approx(0.0, abs=1e-12)
        assert record.video_duration == 600.0
        assert record.media_duration == pytest.approx(180.0)


class TestAggregates:

    def test_recomputable_from_records(self, corpus):
        cfg = CycleConfig(num_agents=12, chart_size=10, cycles=2, seed=6, min_length=60.0, workers=4)
        first = run_cycle(cfg, corpus)
        second = run_cycle(cfg, corpus)
        assert first.aggregates() == second.aggregates()

        records = first.records
        assert [(r.ma_id, r.sequence) for r in records] == sorted((r.ma_id, r.sequence) for r in records)
        expected = {}
        for record in records:
            expected.setdefault(record.video_id, []).append(record)
        aggregates = first.aggregates()
        assert list(aggregates) == sorted(expected)
        for video_id, group in expected.items():
            aggregate = aggregates[video_id]
            assert aggregate.tests == len(group)
            assert aggregate.stalled_tests == sum(1 for r in group if r.stall_count > 0)
            assert aggregate.mean_total_stall == pytest.approx(np.mean([r.total_stall for r in group]))
            assert aggregate.video_duration == group[0].video_duration
        assert sum(a.tests for a in aggregates.values()) == len(first)
