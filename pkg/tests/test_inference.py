import numpy as np
import pytest

from proxyadjust import (
    BootstrapConfig,
    Dataset,
    bootstrap_ci,
    coverage_experiment,
    estimate_linear,
    estimate_unadjusted,
    scenario,
)
from proxyadjust.errors import DegenerateDataError, UnstableBootstrapError
from proxyadjust.simgen import ScenarioParams, ScenarioSpec


def exact_effect_data(n=120, seed=0):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=n)
    return Dataset(z=rng.normal(size=(n, 2)), a=a, y=a.copy())


class TestBootstrapCi:
    def test_degenerate_data_error_propagates(self):
        data = Dataset(z=np.ones((30, 1)), a=np.ones(30), y=np.ones(30))
        with pytest.raises(DegenerateDataError):
            bootstrap_ci(data, estimate_unadjusted, BootstrapConfig(resamples=10, seed=0))

    def test_zero_sampling_variance(self):
        result = bootstrap_ci(
            exact_effect_data(), estimate_linear, BootstrapConfig(resamples=100, seed=1)
        )
        assert result.ci_upper - result.ci_lower < 1e-12
        assert result.ci_lower == pytest.approx(1.0, abs=1e-10)
        assert result.n_failed == 0

    def test_determinism(self):
        data = exact_effect_data(seed=2)
        cfg = BootstrapConfig(resamples=60, seed=7)
        r1 = bootstrap_ci(data, estimate_unadjusted, cfg)
        r2 = bootstrap_ci(data, estimate_unadjusted, cfg)
        assert (r1.ci_lower, r1.ci_upper) == (r2.ci_lower, r2.ci_upper)

    def test_failure_cap(self):
        data = exact_effect_data(seed=3)
        calls = {"i": 0}

        def flaky(d):
            if d is data:  # full-sample point estimate must succeed
                return 1.0
            calls["i"] += 1
            if calls["i"] % 3 == 0:
                return 1.0
            raise DegenerateDataError("synthetic failure")

        with pytest.raises(UnstableBootstrapError):
            bootstrap_ci(data, flaky, BootstrapConfig(resamples=30, seed=0))

    def test_abort_policy(self):
        def failing(data):
            raise DegenerateDataError("always")

        data = exact_effect_data(seed=4)
        with pytest.raises(DegenerateDataError):
            bootstrap_ci(
                data,
                lambda d: 1.0 if d is data else failing(d),
                BootstrapConfig(resamples=10, seed=0, failure_policy="abort"),
            )

    def test_point_estimate_not_clamped_into_interval(self):
        data = exact_effect_data(seed=5)
        est = lambda d: 5.0 if d is data else 1.0
        result = bootstrap_ci(data, est, BootstrapConfig(resamples=50, seed=0))
        assert result.point == 5.0
        assert result.ci_upper < result.point  # reported, not clamped

    def test_percentile_endpoints_are_order_statistics(self):
        # With 201 resamples the 2.5%/97.5% positions are integers, so the
        # endpoints must be exact order statistics and commute with any
        # monotone transformation of the estimates.
        data = exact_effect_data(seed=6)
        rng_est = np.random.default_rng(9)
        noise = {}

        def jittered(d):
            key = id(d)
            if key not in noise:
                noise[key] = float(rng_est.normal())
            return noise[key]

        cfg = BootstrapConfig(resamples=201, seed=3)
        base = bootstrap_ci(data, jittered, cfg)
        resample_values = sorted(noise.values())
        assert base.ci_lower in resample_values
        assert base.ci_upper in resample_values


class TestCoverageExperiment:
    def test_nominal_level_for_sample_mean(self):
        # Textbook setting: estimator = mean of Y, i.i.d. data with E[Y] = 0.
        params = scenario("baseline", n=1, seed=0).params
        custom = ScenarioParams(
            family="factor",
            alpha=np.array([0.0, 0.5, -0.9]),
            gamma=np.array([0.0, 0.0, 0.0]),
            outcome_noise=0.5,
            loadings=params.loadings,
            psi_sd=params.psi_sd,
            nu=params.nu,
            b=params.b,
            c=params.c,
        )
        spec = ScenarioSpec(scenario_id="baseline", n=150, seed=123, params=custom)
        assert custom.true_ate() == 0.0
        result = coverage_experiment(
            spec,
            estimator=lambda d: float(d.y.mean()),
            config=BootstrapConfig(resamples=300, seed=5),
            replications=100,
        )
        assert 0.90 <= result.coverage <= 0.99
        assert result.mean_width > 0

    def test_requires_enough_replications(self):
        spec = scenario("baseline", n=50, seed=0)
        with pytest.raises(ValueError):
            coverage_experiment(spec, estimator=lambda d: 0.0, replications=5)

    def test_exactly_one_estimator_argument(self):
        spec = scenario("baseline", n=50, seed=0)
        with pytest.raises(ValueError, match="exactly one"):
            coverage_experiment(spec, replications=10)
