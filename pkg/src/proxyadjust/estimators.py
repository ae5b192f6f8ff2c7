"""Treatment-effect estimation from latent-confounder posteriors.

Pipeline: fit the measurement model, compute per-row posterior means of the
latent confounder with and without conditioning on treatment, regress the
outcome on [1, U_hat, A*U_hat, A], and read the effect off the interaction
and main-effect coefficients:

    cate_i = (a1 - a0) * (nu2' E[U | Z_i, X_i] + nu3)
    ate    = mean(cate)
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import (
    DegenerateDataError,
    EstimationError,
    FitSelectionError,
    ProxyAdjustError,
    RankDeficiencyError,
)
from .fitting import FitConfig, FitResult, fit_candidates, select_k
from .model import Dataset, MimicParams, posterior_mean_matrix

__all__ = [
    "ContrastSpec",
    "OutcomeModel",
    "EstimateResult",
    "ols",
    "wls",
    "outcome_regression",
    "ate_from_params",
    "estimate_latent_proxy",
    "warm_started_latent_estimator",
]

# Designs with a singular-value ratio beyond this are refused outright:
# near-collinear posteriors (e.g. a proxy acting as an instrument) otherwise
# surface as wild outlier estimates.
CONDITION_LIMIT = 1e8


@dataclass(frozen=True)
class ContrastSpec:
    """Treatment contrast: effect of moving from a0 to a1."""

    a0: float = 0.0
    a1: float = 1.0

    def __post_init__(self):
        if self.a1 == self.a0:
            raise ValueError("contrast requires a1 != a0")

    @property
    def delta(self) -> float:
        return self.a1 - self.a0


@dataclass(frozen=True)
class OutcomeModel:
    """Fitted working outcome regression E[Y] = nu0 + nu1'U + nu2'U A + nu3 A."""

    nu0: float
    nu1: np.ndarray
    nu2: np.ndarray
    nu3: float
    residual_variance: float
    condition_number: float
    extra_coefficients: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "nu1", np.asarray(self.nu1, dtype=float))
        object.__setattr__(self, "nu2", np.asarray(self.nu2, dtype=float))
        if not np.isfinite(self.nu0) or not np.isfinite(self.nu3):
            raise ValueError("outcome coefficients must be finite")
        if self.condition_number < 1.0:
            raise ValueError("condition_number must be >= 1")


@dataclass
class EstimateResult:
    """A method's point estimate with optional CI and diagnostics."""

    method: str
    ate: float
    cate: np.ndarray | None = None
    ci_lower: float | None = None
    ci_upper: float | None = None
    diagnostics: dict = field(default_factory=dict)


def ols(design: np.ndarray, y: np.ndarray, stage: str = "ols") -> tuple[np.ndarray, float]:
    """Least squares with a rank/conditioning guard.

    Returns (coefficients, condition number). Raises RankDeficiencyError when
    the design is rank deficient or its condition number exceeds the limit.
    """
    design = np.asarray(design, dtype=float)
    y = np.asarray(y, dtype=float)
    beta, _, rank, sv = np.linalg.lstsq(design, y, rcond=None)
    cond = float(sv[0] / sv[-1]) if sv[-1] > 0 else float("inf")
    if rank < design.shape[1] or cond > CONDITION_LIMIT:
        raise RankDeficiencyError(
            f"design matrix in stage {stage!r} is rank deficient or ill-conditioned",
            stage=stage,
            condition_number=cond,
        )
    return beta, cond


def wls(
    design: np.ndarray, y: np.ndarray, weights: np.ndarray, stage: str = "wls"
) -> tuple[np.ndarray, float]:
    """Weighted least squares via row scaling by sqrt(weights)."""
    weights = np.asarray(weights, dtype=float)
    if np.any(weights < 0) or not np.all(np.isfinite(weights)):
        raise ValueError(f"stage {stage!r}: weights must be finite and nonnegative")
    root = np.sqrt(weights)
    return ols(design * root[:, None], y * root, stage=stage)


def outcome_regression(
    y: np.ndarray,
    a: np.ndarray,
    u_hat_za: np.ndarray,
    extra_covariates: np.ndarray | None = None,
) -> OutcomeModel:
    """OLS of the outcome on [1, U_hat, A*U_hat, A] (plus optional extra columns).

    ``u_hat_za`` holds the treatment-conditioned posterior means, one row per
    observation; it may have zero columns, reducing the model to [1, A].
    """
    y = np.asarray(y, dtype=float)
    a = np.asarray(a, dtype=float)
    u = np.asarray(u_hat_za, dtype=float)
    if u.ndim != 2 or u.shape[0] != y.shape[0] or a.shape[0] != y.shape[0]:
        raise DegenerateDataError("outcome regression inputs have inconsistent lengths")
    n, k = u.shape
    blocks = [np.ones((n, 1)), u, u * a[:, None], a[:, None]]
    if extra_covariates is not None:
        extra = np.asarray(extra_covariates, dtype=float)
        blocks.append(extra)
    design = np.column_stack(blocks)
    beta, cond = ols(design, y, stage="outcome_regression")
    resid = y - design @ beta
    dof = max(n - design.shape[1], 1)
    return OutcomeModel(
        nu0=float(beta[0]),
        nu1=beta[1 : 1 + k],
        nu2=beta[1 + k : 1 + 2 * k],
        nu3=float(beta[1 + 2 * k]),
        residual_variance=float(resid @ resid) / dof,
        condition_number=cond,
        extra_coefficients=beta[2 + 2 * k :] if extra_covariates is not None else None,
    )


def ate_from_params(
    data: Dataset,
    params: MimicParams,
    contrast: ContrastSpec = ContrastSpec(),
    include_x_main_effects: bool = False,
) -> tuple[EstimateResult, OutcomeModel]:
    """Effect estimate given already-fitted measurement-model parameters."""
    y = data.require_outcome()
    u_za, _ = posterior_mean_matrix(params, data.z, a=data.a, x=data.x if params.m else None)
    u_z, _ = posterior_mean_matrix(params, data.z, a=None, x=data.x if params.m else None)
    extra = data.x if (include_x_main_effects and data.m > 0) else None
    model = outcome_regression(y, data.a, u_za, extra_covariates=extra)
    cate = contrast.delta * (u_z @ model.nu2 + model.nu3)
    result = EstimateResult(
        method="latent",
        ate=float(cate.mean()),
        cate=cate,
        diagnostics={"condition_number": model.condition_number},
    )
    return result, model


def estimate_latent_proxy(
    data: Dataset,
    contrast: ContrastSpec = ContrastSpec(),
    fit_config: FitConfig = FitConfig(),
    inits: dict[int, MimicParams] | None = None,
    include_x_main_effects: bool = False,
) -> EstimateResult:
    """Latent-proxy effect estimate: model selection, posteriors, outcome regression.

    Failures are re-raised as EstimationError labelled with the stage that
    failed ("factor_fit", "posterior", or "outcome_regression").
    """
    if data.n <= data.p + 5:
        raise DegenerateDataError(f"need n > p + 5 rows, got n={data.n}, p={data.p}")
    try:
        fit = select_k(data, fit_config, inits=inits)
    except ProxyAdjustError as exc:
        raise EstimationError(f"factor_fit: {exc}", stage="factor_fit") from exc
    try:
        result, model = ate_from_params(
            data, fit.params, contrast, include_x_main_effects=include_x_main_effects
        )
    except RankDeficiencyError as exc:
        raise EstimationError(f"outcome_regression: {exc}", stage="outcome_regression") from exc
    except ProxyAdjustError as exc:
        raise EstimationError(f"posterior: {exc}", stage="posterior") from exc
    result.diagnostics.update(
        k=fit.k,
        aic=fit.aic,
        loglik=fit.loglik,
        converged=fit.converged,
        iterations=fit.iterations,
        heywood_events=fit.heywood_events,
        residual_variance=model.residual_variance,
    )
    return result


def warm_started_latent_estimator(
    full_data: Dataset,
    contrast: ContrastSpec = ContrastSpec(),
    fit_config: FitConfig = FitConfig(),
) -> Callable[[Dataset], EstimateResult]:
    """Resample-friendly latent estimator for bootstrapping.

    Selects the factor count once on the full sample, then refits that single
    k on each dataset it is called with, warm-starting EM from the
    full-sample parameters. Refitting keeps measurement-model variability in
    the intervals while skipping the per-resample model search.
    """
    fits, failures = fit_candidates(full_data, fit_config)
    if not fits:
        raise FitSelectionError(failures)
    best_k = min(fits, key=lambda k: (fits[k].aic, k))
    init = fits[best_k].params
    resample_config = FitConfig(
        max_iterations=fit_config.max_iterations,
        loglik_rel_tolerance=fit_config.loglik_rel_tolerance,
        variance_floor_fraction=fit_config.variance_floor_fraction,
        k_candidates=(best_k,),
        fix_treatment_variance=fit_config.fix_treatment_variance,
    )

    def estimate(data: Dataset) -> EstimateResult:
        return estimate_latent_proxy(
            data, contrast, resample_config, inits={best_k: init}
        )

    return estimate
