import numpy as np
import pytest

from proxyadjust import (
    Dataset,
    FitConfig,
    MimicParams,
    aic,
    fit_mimic,
    implied_moments,
    loglik,
    max_identified_k,
    rotate_params,
    rotate_to_canonical,
    scenario,
    select_k,
    generate,
)
from proxyadjust.errors import DegenerateDataError, FitSelectionError, RankDeficiencyError

from conftest import random_params


def baseline_data(n, seed):
    return generate(scenario("baseline", n=n, seed=seed)).dataset


class TestEmAscent:
    def test_trace_monotone_on_baseline(self):
        fit = fit_mimic(baseline_data(800, 0), k=2)
        deltas = np.diff(fit.loglik_trace)
        assert deltas.min() > -1e-10 * max(1.0, np.abs(fit.loglik_trace).max())

    def test_trace_monotone_with_duplicated_scaled_rows(self):
        data = baseline_data(300, 1)
        z = np.vstack([data.z, data.z * 1.5])
        a = np.concatenate([data.a, data.a * 1.5])
        fit = fit_mimic(Dataset(z=z, a=a), k=2)
        deltas = np.diff(fit.loglik_trace)
        assert deltas.min() > -1e-10 * max(1.0, np.abs(fit.loglik_trace).max())

    def test_trace_monotone_with_covariates(self):
        rng = np.random.default_rng(2)
        n = 500
        x = rng.normal(size=(n, 2))
        u = x @ np.array([[0.5], [-0.3]]) + rng.standard_normal((n, 1))
        z = u @ np.array([[0.8, 0.7, 0.6]]) + rng.normal(scale=0.6, size=(n, 3))
        a = u[:, 0] * 0.5 + rng.standard_normal(n)
        fit = fit_mimic(Dataset(z=z, a=a, x=x), k=1)
        assert fit.converged
        deltas = np.diff(fit.loglik_trace)
        assert deltas.min() > -1e-10 * max(1.0, np.abs(fit.loglik_trace).max())


class TestFitRecovery:
    def test_baseline_implied_covariance_recovered(self):
        # Generate-and-refit oracle at n=5000: the fitted implied covariance
        # sits within 0.05 of the generating one, entry by entry.
        data = baseline_data(5000, 42)
        truth = scenario("baseline", n=1, seed=0).params.to_mimic_params()
        fit = fit_mimic(data, k=2)
        assert fit.converged
        fitted_cov = implied_moments(fit.params)[1]
        true_cov = implied_moments(truth)[1]
        assert np.abs(fitted_cov - true_cov).max() < 0.05

    def test_single_factor_loadings_recovered(self):
        lam = np.array([0.8, 0.7, 0.6])
        psi = np.array([0.36, 0.51, 0.64])
        rng = np.random.default_rng(9)
        n = 10_000
        u = rng.standard_normal(n)
        z = np.outer(u, lam) + rng.standard_normal((n, 3)) * np.sqrt(psi)
        a = 0.5 * u + 0.1 + rng.standard_normal(n)
        fit = fit_mimic(Dataset(z=z, a=a), k=1)
        fitted = fit.params.loadings[:, 0]
        if fitted[0] < 0:
            fitted = -fitted
        assert np.abs(fitted - lam).max() < 0.05

    def test_refit_error_shrinks_with_n(self):
        truth = scenario("baseline", n=1, seed=0).params.to_mimic_params()
        true_cov = implied_moments(truth)[1]
        errors = []
        for n in (500, 2000, 8000):
            fit = fit_mimic(baseline_data(n, 77), k=2)
            errors.append(np.abs(implied_moments(fit.params)[1] - true_cov).max())
        assert errors[2] < errors[0]

    def test_variance_floor_respected(self):
        data = baseline_data(600, 5)
        config = FitConfig(variance_floor_fraction=1e-4)
        fit = fit_mimic(data, k=2, config=config)
        w = np.column_stack([data.z, data.a])
        floors = 1e-4 * w.var(axis=0)
        assert np.all(fit.params.unique_variances >= floors[:-1] - 1e-15)
        assert fit.params.treatment_unique_variance >= floors[-1] - 1e-15

    def test_non_convergence_is_flagged_not_raised(self):
        fit = fit_mimic(baseline_data(400, 3), k=2, config=FitConfig(max_iterations=2))
        assert not fit.converged
        assert fit.iterations == 2

    def test_zero_variance_column_errors_with_name(self):
        data = baseline_data(100, 4)
        z = data.z.copy()
        z[:, 3] = 2.5
        with pytest.raises(DegenerateDataError, match="Z4"):
            fit_mimic(Dataset(z=z, a=data.a), k=1)

    def test_fixed_treatment_variance(self):
        fit = fit_mimic(baseline_data(2000, 8), k=2, config=FitConfig(fix_treatment_variance=True))
        assert fit.params.treatment_unique_variance == 1.0

    def test_warm_start_converges_fast(self):
        data = baseline_data(2000, 12)
        cold = fit_mimic(data, k=2)
        resample = data.take(np.random.default_rng(0).integers(0, data.n, data.n))
        warm = fit_mimic(resample, k=2, init=cold.params)
        assert warm.converged
        assert warm.iterations < cold.iterations


class TestCanonicalRotation:
    def test_idempotent_on_canonical(self):
        fit = fit_mimic(baseline_data(1000, 6), k=2)
        again = rotate_to_canonical(fit.params)
        np.testing.assert_allclose(again.loadings, fit.params.loadings, atol=1e-12)
        np.testing.assert_allclose(
            again.treatment_loadings, fit.params.treatment_loadings, atol=1e-12
        )

    def test_recovers_canonical_after_random_rotation(self):
        rng = np.random.default_rng(13)
        fit = fit_mimic(baseline_data(1000, 7), k=2)
        q, _ = np.linalg.qr(rng.normal(size=(2, 2)))
        scrambled = rotate_params(fit.params, q)
        recovered = rotate_to_canonical(scrambled)
        np.testing.assert_allclose(recovered.loadings, fit.params.loadings, atol=1e-8)

    def test_sign_flip_for_single_factor(self):
        params = MimicParams(
            loadings=[[-0.5], [0.2]],
            unique_variances=[1.0, 1.0],
            intercepts=[0.0, 0.0],
            cause_coefficients=np.full((1, 1), 0.4),
            treatment_loadings=[0.3],
            treatment_intercept=0.0,
            treatment_unique_variance=1.0,
        )
        canon = rotate_to_canonical(params)
        np.testing.assert_allclose(canon.loadings, [[0.5], [-0.2]])
        np.testing.assert_allclose(canon.treatment_loadings, [-0.3])
        np.testing.assert_allclose(canon.cause_coefficients, [[-0.4]])

    def test_loglik_unchanged(self):
        data = baseline_data(500, 14)
        fit = fit_mimic(data, k=2)
        rng = np.random.default_rng(15)
        q, _ = np.linalg.qr(rng.normal(size=(2, 2)))
        scrambled = rotate_params(fit.params, q)
        assert loglik(rotate_to_canonical(scrambled), data) == pytest.approx(
            loglik(fit.params, data), abs=1e-8
        )

    def test_rank_deficient_rejected(self):
        params = MimicParams(
            loadings=[[1.0, 1.0], [2.0, 2.0], [3.0, 3.0]],
            unique_variances=[1.0, 1.0, 1.0],
            intercepts=[0.0, 0.0, 0.0],
            cause_coefficients=np.zeros((2, 0)),
            treatment_loadings=[0.0, 0.0],
            treatment_intercept=0.0,
            treatment_unique_variance=1.0,
        )
        with pytest.raises(RankDeficiencyError):
            rotate_to_canonical(params)


class TestAic:
    def test_arithmetic_free_variance(self):
        assert aic(0.0, p=1, k=1, m=0) == 12.0

    def test_arithmetic_fixed_variance(self):
        assert aic(0.0, p=1, k=1, m=0, fix_treatment_variance=True) == 10.0

    def test_parameter_count_audit_baseline(self):
        # Audit against the fitter's free-parameter list for p=8, k=2, m=0:
        # loadings 9*2 minus 1 rotation constraint, 9 intercepts, 9 variances.
        fit = fit_mimic(baseline_data(1200, 20), k=2)
        p, k = 8, 2
        n_loadings = (p + 1) * k - k * (k - 1) // 2
        n_intercepts = p + 1
        n_variances = p + 1
        q = n_loadings + n_intercepts + n_variances
        assert q == 35
        assert fit.aic == pytest.approx(-2.0 * fit.loglik + 2.0 * 35, rel=1e-12)


class TestSelectK:
    def test_singleton_candidate_returned_unconditionally(self):
        data = baseline_data(800, 21)
        fit = select_k(data, FitConfig(k_candidates=(1,)))
        assert fit.k == 1

    def test_baseline_selects_true_k(self):
        # Replication oracle: the generating model has k=2; AIC should find
        # it in at least 90% of replications at n=2000.
        hits = 0
        for rep in range(100):
            data = baseline_data(2000, 1000 + rep)
            fit = select_k(data)
            hits += fit.k == 2
        assert hits >= 90

    def test_quadratic_scenario_selects_one_factor(self):
        hits = 0
        for rep in range(40):
            data = generate(scenario("quadratic", n=1000, seed=2000 + rep)).dataset
            fit = select_k(data)
            hits += fit.k == 1
        assert hits > 20

    def test_all_failures_aggregate(self):
        data = baseline_data(400, 22)
        with pytest.raises(FitSelectionError, match="k=2"):
            select_k(data, FitConfig(max_iterations=1, k_candidates=(2, 3)))


class TestLedermannBound:
    def test_known_values(self):
        assert max_identified_k(8) == 5   # nine indicators
        assert max_identified_k(2) == 1   # three indicators
        assert max_identified_k(6) == 3   # seven indicators

    def test_bound_is_tight(self):
        for p in (2, 4, 6, 8, 16):
            q = p + 1
            k = max_identified_k(p)
            used = q * k - k * (k - 1) // 2 + q
            assert q * (q + 1) // 2 - used >= 0
            k2 = k + 1
            used2 = q * k2 - k2 * (k2 - 1) // 2 + q
            assert q * (q + 1) // 2 - used2 < 0
