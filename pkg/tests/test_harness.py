import csv
import math

import numpy as np
import pytest

from conftest import make_topology, unit_nsr
from lightpath_lab import harness
from lightpath_lab.environment import EpisodeConfig, TerminationMode
from lightpath_lab.harness import (
    PairedResult,
    paired_eval,
    run_episode,
    run_many,
    stats,
    summarize_sweep,
    sweep,
    training_curve,
)
from lightpath_lab.heuristics import HeuristicPolicy, HeuristicVariant, RandomValidPolicy
from lightpath_lab.physical_layer import TransmissionConfig
from lightpath_lab.topology import Ordering, build_path_table


@pytest.fixture(scope="module")
def two_node():
    topo = make_topology([("A", "B", 1.0)])
    table = build_path_table(topo, 1, Ordering.HOPS, unit_nsr(topo, 1.0))
    return table


class TestRunEpisode:
    def test_single_link_two_slots(self, two_node):
        # One link, one channel, 200 Gbps capacity: 2 accepted, 8 blocked.
        result = run_episode(
            HeuristicPolicy(HeuristicVariant.KSP_FF),
            two_node,
            EpisodeConfig(num_requests=10, seed=0),
            TransmissionConfig.for_channel_count(1),
        )
        assert result.accepted == 2
        assert result.blocked == 8
        assert result.first_block_step == 2
        assert result.throughput_gbps == 200.0
        assert result.requests_processed == 10

    def test_deterministic_repeat(self, nsfnet_table):
        cfg = EpisodeConfig(num_requests=500, seed=3)
        pol = HeuristicPolicy(HeuristicVariant.FF_KSP)
        assert run_episode(pol, nsfnet_table, cfg) == run_episode(pol, nsfnet_table, cfg)

    def test_first_blocking_mode(self, two_node):
        result = run_episode(
            HeuristicPolicy(HeuristicVariant.KSP_FF),
            two_node,
            EpisodeConfig(num_requests=10, seed=0,
                          termination=TerminationMode.FIRST_BLOCKING),
            TransmissionConfig.for_channel_count(1),
        )
        assert result.blocked == 1
        assert result.accepted == 2

    def test_run_many_ordered_by_seed(self, two_node):
        results = run_many(
            HeuristicPolicy(HeuristicVariant.KSP_FF),
            two_node,
            EpisodeConfig(num_requests=10),
            seeds=[4, 1, 3],
            transmission=TransmissionConfig.for_channel_count(1),
            n_jobs=1,
        )
        assert [r.seed for r in results] == [4, 1, 3]

    def test_seed_base_env_var(self, two_node, monkeypatch):
        monkeypatch.setenv(harness.SEED_BASE_ENV_VAR, "1000")
        results = run_many(
            HeuristicPolicy(HeuristicVariant.KSP_FF),
            two_node,
            EpisodeConfig(num_requests=10),
            seeds=[1],
            transmission=TransmissionConfig.for_channel_count(1),
            n_jobs=1,
        )
        assert results[0].seed == 1001


class TestSweep:
    def test_k1_cells_identical_seed_for_seed(self, triangle):
        rows = sweep(
            triangle,
            unit_nsr(triangle, 1.0),
            methods=["ksp_ff", "ff_ksp"],
            k_values=[1],
            orderings=["hops"],
            episode_lengths=[30],
            seeds=range(5),
            transmission=TransmissionConfig.for_channel_count(2),
            n_jobs=1,
        )
        by = {}
        for row in rows:
            by.setdefault(row["method"], {})[row["seed"]] = row["accepted"]
        assert by["ksp_ff"] == by["ff_ksp"]

    def test_summary_and_csv_round_trip(self, triangle, tmp_path):
        rows = sweep(
            triangle,
            unit_nsr(triangle, 1.0),
            methods=["ksp_ff"],
            k_values=[1, 2],
            orderings=["hops"],
            episode_lengths=[20],
            seeds=range(3),
            transmission=TransmissionConfig.for_channel_count(2),
            n_jobs=1,
        )
        assert len(rows) == 6
        out = tmp_path / "sweep.csv"
        harness.write_csv(out, rows, harness.SWEEP_COLUMNS)
        back = harness.read_csv(out)
        assert len(back) == len(rows)
        for a, b in zip(back, rows):
            assert int(a["accepted"]) == b["accepted"]
            assert int(a["k"]) == b["k"]
            assert a["method"] == b["method"]
        cells = summarize_sweep(rows)
        assert len(cells) == 2
        for cell in cells:
            values = [r["accepted"] for r in rows if r["k"] == cell["k"]]
            assert cell["mean_accepted"] == pytest.approx(np.mean(values))
            assert cell["median_accepted"] == pytest.approx(np.median(values))


class TestPairedEval:
    def test_identical_policies_zero_delta(self, nsfnet_table):
        pol = HeuristicPolicy(HeuristicVariant.KSP_FF)
        paired, summary = paired_eval(
            pol, pol, nsfnet_table, EpisodeConfig(num_requests=300), range(4), n_jobs=1
        )
        assert all(p.delta == 0 for p in paired)
        assert summary["mean_delta"] == 0.0
        assert summary["ties"] == 4

    def test_identical_request_sequences(self, nsfnet_table):
        # Different policies, same seed: the (src, dst) trace must match
        # step for step.
        cfg = EpisodeConfig(num_requests=200, seed=17)
        _, trace_a = run_episode(
            HeuristicPolicy(HeuristicVariant.KSP_FF), nsfnet_table, cfg, record_trace=True
        )
        _, trace_b = run_episode(
            RandomValidPolicy(seed=5), nsfnet_table, cfg, record_trace=True
        )
        assert [(r[1], r[2]) for r in trace_a] == [(r[1], r[2]) for r in trace_b]

    def test_summary_statistics(self, nsfnet_table):
        paired, summary = paired_eval(
            HeuristicPolicy(HeuristicVariant.KSP_FF),
            RandomValidPolicy(seed=1),
            nsfnet_table,
            EpisodeConfig(num_requests=300),
            range(4),
            n_jobs=1,
        )
        deltas = [p.delta for p in paired]
        assert summary["mean_delta"] == pytest.approx(np.mean(deltas))
        assert summary["wins_a"] == sum(d > 0 for d in deltas)
        assert summary["mean_delta_throughput_gbps"] == pytest.approx(100 * np.mean(deltas))


class TestStats:
    def test_constant_sample(self):
        s = stats([5, 5, 5])
        assert s["mean"] == 5 and s["std"] == 0
        assert s["whisker_low"] == 5 and s["whisker_high"] == 5

    def test_1_to_100(self):
        s = stats(range(1, 101))
        assert s["median"] == 50.5
        assert s["q1"] == 25.75
        assert s["q3"] == 75.25

    def test_single_value_whiskers_collapse(self):
        s = stats([42.0])
        assert s["whisker_low"] == 42.0 and s["whisker_high"] == 42.0
        assert s["median"] == 42.0

    def test_whiskers_clip_outliers(self):
        values = list(range(1, 21)) + [1000]
        s = stats(values)
        assert s["whisker_high"] < 1000

    def test_against_numpy_reference(self):
        rng = np.random.default_rng(0)
        values = rng.normal(100, 20, size=257)
        s = stats(values)
        assert s["mean"] == pytest.approx(values.mean())
        assert s["median"] == pytest.approx(np.median(values))
        assert s["std"] == pytest.approx(values.std())
        q1, q3 = np.percentile(values, [25, 75])
        assert s["q1"] == pytest.approx(q1) and s["q3"] == pytest.approx(q3)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            stats([])


class TestTrainingCurve:
    def write_log(self, path, rows):
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=["update", "env_steps", "mean_accepted", "std_accepted"])
            writer.writeheader()
            writer.writerows(rows)

    def test_series_skips_empty_windows(self, tmp_path):
        log = tmp_path / "updates.csv"
        self.write_log(
            log,
            [
                {"update": 1, "env_steps": 100, "mean_accepted": 5.0, "std_accepted": 1.0},
                {"update": 2, "env_steps": 200, "mean_accepted": math.nan, "std_accepted": math.nan},
                {"update": 3, "env_steps": 300, "mean_accepted": 7.0, "std_accepted": 0.5},
            ],
        )
        series = training_curve(log)
        assert series["update"] == [1, 3]
        assert series["mean_accepted"] == [5.0, 7.0]

    def test_plot_written(self, tmp_path):
        log = tmp_path / "updates.csv"
        self.write_log(
            log,
            [{"update": i, "env_steps": i * 100, "mean_accepted": 5 + i, "std_accepted": 1.0}
             for i in range(1, 6)],
        )
        out = tmp_path / "curve.png"
        harness.plot_training_curve(log, out, baseline=8.0)
        assert out.exists() and out.stat().st_size > 0

    def test_accepts_run_directory(self, tmp_path):
        self.write_log(
            tmp_path / "updates.csv",
            [{"update": 1, "env_steps": 100, "mean_accepted": 5.0, "std_accepted": 1.0}],
        )
        assert training_curve(tmp_path)["mean_accepted"] == [5.0]

    def test_empty_log_rejected(self, tmp_path):
        log = tmp_path / "updates.csv"
        self.write_log(log, [])
        with pytest.raises(ValueError):
            training_curve(log)


class TestPlots:
    def test_paired_bars(self, tmp_path):
        paired = [PairedResult(seed=i, accepted_a=10 + (i % 3) - 1, accepted_b=10) for i in range(20)]
        out = tmp_path / "pair.png"
        harness.plot_paired_bars(paired, out)
        assert out.exists() and out.stat().st_size > 0

    def test_boxplots(self, tmp_path):
        out = tmp_path / "box.png"
        harness.plot_boxplots({"a": [1, 2, 3, 4], "b": [2, 3, 4, 5]}, out)
        assert out.exists() and out.stat().st_size > 0
