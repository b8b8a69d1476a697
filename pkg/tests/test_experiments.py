"""Tests for the experiment harness."""
import numpy as np
import pandas as pd
import pytest

from tilt_solver.config.config import OuterOptions, SolverOptions
from tilt_solver.experiments import (
    bench_frame, bench_inner, experiment_corruption, experiment_range, experiment_speed, median_times,
    random_instance, read_table, run_tasks, summarize_bench, write_results, write_table,
)
from tilt_solver.imaging import range_grid, synthetic_corpus


def _square(x):
    return {"x": x, "y": x * x}


class TestPlumbing:
    """Tests for task mapping and table output."""

    def test_run_tasks_keeps_order(self):
        rows = run_tasks(_square, [3, 1, 2], jobs=1, show_progress=False)
        assert [r["y"] for r in rows] == [9, 1, 4]

    def test_run_tasks_in_processes(self):
        rows = run_tasks(_square, list(range(6)), jobs=2, show_progress=False)
        assert [r["x"] for r in rows] == list(range(6))

    def test_write_table_header(self, tmp_path):
        frame = pd.DataFrame({"a": [1, 2], "b": [0.1, 1 / 3]})
        path = write_table(frame, tmp_path / "t.csv", "demo")
        lines = path.read_text().splitlines()
        assert lines[0] == "# tilt-solver demo v1"
        assert lines[1] == "a,b"
        assert lines[3] == "2,0.3333333333"
        pd.testing.assert_frame_equal(read_table(path), pd.DataFrame({"a": [1, 2], "b": [0.1, 0.3333333333]}))

    def test_write_results_splits_timings(self, tmp_path):
        frame = pd.DataFrame({"k": [2, 1], "v": [20, 10], "time_s": [0.5, 0.25]})
        main, timings = write_results(frame, tmp_path, "demo", ["k"], ["time_s"])
        assert list(read_table(main).columns) == ["k", "v"]
        assert list(read_table(main)["k"]) == [1, 2]
        assert list(read_table(timings).columns) == ["k", "time_s"]


class TestBenchInner:
    """Tests for the inner-loop benchmark."""

    def test_instances_are_reproducible(self):
        d1, j1 = random_instance(10, 8, seed=3, trial=1)
        d2, j2 = random_instance(10, 8, seed=3, trial=1)
        np.testing.assert_array_equal(d1, d2)
        np.testing.assert_array_equal(j1, j2)
        assert np.linalg.norm(d1) == pytest.approx(1.0)
        assert not np.array_equal(d1, random_instance(10, 8, seed=3, trial=2)[0])

    def test_bench_rows(self):
        opts = SolverOptions(rho0=1.5, eps2=1e-4, max_inner_iters=300)
        instances = bench_inner([6, 8], trials=2, seed=0, solvers=["adm", "ladmap"], options=opts,
                                show_progress=False)
        assert len(instances) == 2 * 2 * 2
        rows = summarize_bench(instances)
        assert [(r.size, r.solver) for r in rows] == [(6, "adm"), (6, "ladmap"), (8, "adm"), (8, "ladmap")]
        assert all(r.trials == 2 for r in rows)
        frame = bench_frame(rows)
        assert {"size", "solver", "mean_iters", "mean_objective", "mean_time_s"} <= set(frame.columns)

    def test_deterministic_columns(self):
        opts = SolverOptions(max_inner_iters=100)
        first = bench_inner([6], trials=2, solvers=["ladmap"], options=opts, show_progress=False)
        second = bench_inner([6], trials=2, solvers=["ladmap"], options=opts, show_progress=False)
        columns = ["size", "trial", "solver", "iterations", "objective"]
        pd.testing.assert_frame_equal(first[columns], second[columns])


class TestSweeps:
    """Small versions of the range, corruption and speed sweeps."""

    def test_range_grid_shape(self, quiet_options):
        quiet_options.max_outer_iters = 2
        frame = experiment_range([0.0, 0.1], [0.0], solvers=["ladmap"], options=quiet_options,
                                 show_progress=False)
        assert len(frame) == 2
        assert set(frame["success"]) <= {0, 1}
        assert {"theta", "t", "solver", "rel_err", "time_s"} <= set(frame.columns)

    def test_corruption_summary(self, quiet_options):
        quiet_options.max_outer_iters = 2
        corpus = synthetic_corpus(size=64, window=24)[:2]
        summary, detail = experiment_corruption(corpus, [0.0, 0.5], seed=1, solvers=["ladmap"],
                                                options=quiet_options, show_progress=False)
        assert len(detail) == 4
        assert list(summary["level"]) == [0.0, 0.5]
        assert all(summary["cases"] == 2)
        assert summary["success_rate"].between(0, 1).all()

    def test_speed_table(self, quiet_options):
        quiet_options.max_outer_iters = 2
        corpus = synthetic_corpus(size=64, window=24)[:1]
        frame = experiment_speed(corpus, solvers=["adm", "ladmap"], options=quiet_options, show_progress=False)
        assert len(frame) == 2
        adm = frame[frame["solver"] == "adm"].iloc[0]
        assert adm["speedup_vs_adm"] == pytest.approx(1.0)
        assert set(median_times(frame)) == {"adm", "ladmap"}


@pytest.mark.slow
class TestSolverComparisons:
    """Reduced range and corruption sweeps with default options."""

    def test_ladmap_range_contains_adm_range(self):
        thetas, ts = range_grid(6, 6)
        frame = experiment_range(thetas, ts, solvers=["adm", "ladmap"], options=OuterOptions(show_progress=False),
                                 show_progress=False)
        wins = {
            solver: {(row.theta, row.t) for row in group.itertuples() if row.success}
            for solver, group in frame.groupby("solver")
        }
        assert len(wins["adm"] - wins["ladmap"]) <= 2
        assert (0.0, 0.0) in wins["adm"]
        assert (0.0, 0.0) in wins["ladmap"]

    def test_corruption_curve(self):
        summary, _ = experiment_corruption(synthetic_corpus(), [0.0, 0.5], seed=0, solvers=["adm", "ladmap"],
                                           options=OuterOptions(show_progress=False), show_progress=False)
        rate = summary.set_index(["level", "solver"])["success_rate"]
        assert rate[(0.0, "adm")] >= 0.9
        assert rate[(0.0, "ladmap")] >= 0.9
        assert rate[(0.5, "ladmap")] >= rate[(0.5, "adm")]
