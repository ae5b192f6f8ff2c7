import numpy as np
import pytest

from proxyadjust import (
    ExperimentPlan,
    GridPoint,
    RawResult,
    run_experiment,
    summarize,
    write_raw_csv,
    write_summary_csv,
)
from proxyadjust.harness import RAW_HEADER, SUMMARY_HEADER, read_raw_csv, run_method
from proxyadjust import generate, scenario


def tiny_plan(**overrides):
    defaults = dict(
        grid=(GridPoint("baseline", 300),),
        methods=("linear",),
        replications=3,
        master_seed=11,
    )
    defaults.update(overrides)
    return ExperimentPlan(**defaults)


class TestRunExperiment:
    def test_row_cardinality(self):
        rows, _ = run_experiment(tiny_plan())
        assert len(rows) == 3

    def test_grid_times_methods_times_reps(self):
        plan = tiny_plan(
            grid=(GridPoint("baseline", 300), GridPoint("coverage", 300)),
            methods=("linear", "unadjusted"),
            replications=2,
        )
        rows, truths = run_experiment(plan)
        assert len(rows) == 2 * 2 * 2
        assert truths == {"baseline": 0.3, "coverage": 0.5}

    def test_byte_identical_reruns(self, tmp_path):
        plan = tiny_plan(methods=("linear", "pci"))
        for name in ("one", "two"):
            rows, truths = run_experiment(plan)
            write_raw_csv(rows, tmp_path / f"{name}_raw.csv")
            write_summary_csv(summarize(rows, truths), tmp_path / f"{name}_summary.csv")
        assert (tmp_path / "one_raw.csv").read_bytes() == (tmp_path / "two_raw.csv").read_bytes()
        assert (
            tmp_path / "one_summary.csv"
        ).read_bytes() == (tmp_path / "two_summary.csv").read_bytes()

    def test_methods_share_replicate_data(self):
        plan = tiny_plan(methods=("linear", "unadjusted"), replications=2)
        rows, _ = run_experiment(plan)
        seeds = {}
        for row in rows:
            seeds.setdefault(row.replicate, set()).add(row.seed)
        assert all(len(s) == 1 for s in seeds.values())

    def test_estimator_failure_becomes_row(self):
        # PCI on the 5-proxy skew scenario must fail (odd proxy count) and be
        # recorded as a failure row rather than aborting the run.
        plan = tiny_plan(grid=(GridPoint("skew_normal", 200),), methods=("pci",))
        rows, _ = run_experiment(plan)
        assert all(r.failed for r in rows)
        assert all(r.estimate is None for r in rows)
        assert all(r.failure_stage for r in rows)

    def test_raw_csv_round_trip(self, tmp_path):
        rows, _ = run_experiment(tiny_plan())
        path = tmp_path / "raw.csv"
        write_raw_csv(rows, path)
        assert path.read_text().splitlines()[0] == RAW_HEADER
        back = read_raw_csv(path)
        assert back == rows


class TestRunMethod:
    def test_all_methods_run_on_baseline(self):
        data = generate(scenario("baseline", n=600, seed=3)).dataset
        for method in ("latent", "linear", "ipw", "iv", "pci", "unadjusted"):
            result = run_method(method, data)
            assert np.isfinite(result.ate)

    def test_unknown_method_rejected(self):
        data = generate(scenario("baseline", n=200, seed=3)).dataset
        with pytest.raises(ValueError):
            run_method("mystery", data)


def make_rows(estimates, scenario="baseline", method="linear", n=100):
    return [
        RawResult(scenario, method, n, i, 42, float(e), False) for i, e in enumerate(estimates)
    ]


class TestSummarize:
    def test_quartiles_of_small_set(self):
        rows = make_rows([1.0, 2.0, 3.0, 4.0, 5.0])
        summary = summarize(rows, {"baseline": 3.0})[0]
        assert summary.median == 3.0
        assert summary.q25 == 2.0
        assert summary.q75 == 4.0
        assert summary.replications == 5
        assert summary.n_failed == 0

    def test_single_estimate_degenerates(self):
        summary = summarize(make_rows([2.5]), {"baseline": 0.3})[0]
        assert (
            summary.median
            == summary.q25
            == summary.q75
            == summary.whisker_low
            == summary.whisker_high
            == 2.5
        )

    def test_whiskers_clip_to_fences(self):
        rows = make_rows([0.0, 1.0, 2.0, 3.0, 100.0])
        summary = summarize(rows, {"baseline": 1.5})[0]
        iqr = summary.q75 - summary.q25
        assert summary.whisker_high == summary.q75 + 1.5 * iqr  # 100 lies outside
        assert summary.whisker_low == 0.0  # within the lower fence

    def test_permutation_invariance(self):
        rows = make_rows([0.3, -0.1, 0.9, 0.5, 0.2, 0.7])
        rng = np.random.default_rng(0)
        shuffled = [rows[i] for i in rng.permutation(len(rows))]
        assert summarize(rows, {"baseline": 0.3}) == summarize(shuffled, {"baseline": 0.3})

    def test_groups_partition_rows(self):
        rows = make_rows([1.0, 2.0]) + make_rows([3.0], method="ipw") + [
            RawResult("baseline", "ipw", 100, 5, 7, None, True, "factor_fit")
        ]
        summary = summarize(rows, {"baseline": 0.3})
        assert sum(r.replications for r in summary) == len(rows)
        assert {(r.scenario, r.method, r.n) for r in summary} == {
            ("baseline", "linear", 100),
            ("baseline", "ipw", 100),
        }

    def test_flagged_outliers_counted_and_retained(self):
        rows = make_rows([0.3, 0.31, 5.0])  # 5.0 > 10 * 0.3
        summary = summarize(rows, {"baseline": 0.3})[0]
        assert summary.n_flagged == 1
        assert summary.replications == 3

    def test_mean_abs_error(self):
        summary = summarize(make_rows([0.2, 0.4]), {"baseline": 0.3})[0]
        assert summary.mean_abs_error == pytest.approx(0.1)

    def test_summary_csv_header(self, tmp_path):
        summary = summarize(make_rows([1.0]), {"baseline": 0.3})
        path = tmp_path / "summary.csv"
        write_summary_csv(summary, path)
        assert path.read_text().splitlines()[0] == SUMMARY_HEADER
