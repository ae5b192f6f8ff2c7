"""Comparison estimators: unadjusted, linear, IPW, IV, and regression-form PCI.

Each estimator consumes a Dataset and a ContrastSpec and returns an
EstimateResult whose ``ate`` is already scaled to the requested contrast.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np
from scipy.special import expit

from .errors import DegenerateDataError, DimensionError, SeparationError
from .estimators import ContrastSpec, EstimateResult, ols, wls
from .model import Dataset

__all__ = [
    "PciSplit",
    "continuous_density_ratio_weights",
    "estimate_unadjusted",
    "estimate_linear",
    "estimate_ipw_continuous",
    "estimate_ipw_binary",
    "estimate_ipw",
    "estimate_iv",
    "estimate_pci",
    "estimate_pci_averaged",
    "enumerate_even_splits",
    "is_binary_treatment",
]


@dataclass(frozen=True)
class PciSplit:
    """Even partition of the proxy columns into negative-control outcomes and exposures."""

    nco_indices: tuple[int, ...]
    nce_indices: tuple[int, ...]

    def __post_init__(self):
        nco = tuple(int(i) for i in self.nco_indices)
        nce = tuple(int(i) for i in self.nce_indices)
        if set(nco) & set(nce):
            raise ValueError("NCO and NCE index sets overlap")
        if len(nco) != len(nce):
            raise ValueError("NCO and NCE sets must have equal size")
        p = len(nco) + len(nce)
        if set(nco) | set(nce) != set(range(p)):
            raise ValueError("split must cover all proxy columns exactly once")
        object.__setattr__(self, "nco_indices", nco)
        object.__setattr__(self, "nce_indices", nce)


def is_binary_treatment(a: np.ndarray) -> bool:
    values = np.unique(a)
    return values.size <= 2 and bool(np.all(np.isin(values, (0.0, 1.0))))


def estimate_unadjusted(data: Dataset, contrast: ContrastSpec = ContrastSpec()) -> EstimateResult:
    """Difference of group means (binary A) or the slope of Y on A (continuous)."""
    y = data.require_outcome()
    a = data.a
    if np.all(a == a[0]):
        raise DegenerateDataError("treatment takes a single value; no contrast available")
    if is_binary_treatment(a):
        treated = a == 1.0
        effect = float(y[treated].mean() - y[~treated].mean())
    else:
        beta, _ = ols(np.column_stack([np.ones_like(a), a]), y, stage="unadjusted")
        effect = float(beta[1])
    return EstimateResult(method="unadjusted", ate=contrast.delta * effect)


def estimate_linear(data: Dataset, contrast: ContrastSpec = ContrastSpec()) -> EstimateResult:
    """OLS of Y on [1, A, Z]; returns the treatment coefficient scaled to the contrast."""
    y = data.require_outcome()
    design = np.column_stack([np.ones(data.n), data.a, data.z])
    beta, cond = ols(design, y, stage="linear")
    return EstimateResult(
        method="linear",
        ate=contrast.delta * float(beta[1]),
        diagnostics={"condition_number": cond},
    )


def _normal_density(x: np.ndarray, mean: np.ndarray | float, var: float) -> np.ndarray:
    return np.exp(-0.5 * (x - mean) ** 2 / var) / math.sqrt(2.0 * math.pi * var)


def continuous_density_ratio_weights(a: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Stabilized IPW weights for a continuous treatment.

    Numerator: normal density of A under its marginal mean/variance.
    Denominator: normal density under the linear model A ~ [1, Z], with the
    residual variance estimated with the n-1 denominator.
    """
    a = np.asarray(a, dtype=float)
    z = np.asarray(z, dtype=float)
    az_design = np.column_stack([np.ones(a.shape[0]), z])
    beta_a, _ = ols(az_design, a, stage="ipw_treatment_model")
    mean_az = az_design @ beta_a
    var_az = float(np.var(a - mean_az, ddof=1))
    mean_a = float(a.mean())
    var_a = float(np.var(a - mean_a, ddof=1))
    if var_az <= 0 or var_a <= 0:
        raise DegenerateDataError("treatment variance estimate is not positive")
    return _normal_density(a, mean_a, var_a) / _normal_density(a, mean_az, var_az)


def estimate_ipw_continuous(
    data: Dataset, contrast: ContrastSpec = ContrastSpec()
) -> EstimateResult:
    """Stabilized-weight IPW for a continuous treatment.

    Weights are the ratio of the marginal normal density of A to the
    conditional density from the linear model A ~ Z; the weighted outcome
    model Y ~ [1, A, A^2, Z] is then averaged at the contrast points over the
    empirical proxy distribution.
    """
    y = data.require_outcome()
    a = data.a
    z = data.z
    weights = continuous_density_ratio_weights(a, z)
    design = np.column_stack([np.ones(data.n), a, a**2, z])
    beta, cond = wls(design, y, weights, stage="ipw_outcome_model")
    pred1 = np.column_stack(
        [np.ones(data.n), np.full(data.n, contrast.a1), np.full(data.n, contrast.a1**2), z]
    )
    pred0 = np.column_stack(
        [np.ones(data.n), np.full(data.n, contrast.a0), np.full(data.n, contrast.a0**2), z]
    )
    ate = float((pred1 @ beta).mean() - (pred0 @ beta).mean())
    return EstimateResult(
        method="ipw", ate=ate, diagnostics={"condition_number": cond, "max_weight": weights.max()}
    )


def _logistic_fit(design: np.ndarray, y: np.ndarray, max_iter: int = 100, tol: float = 1e-10):
    """Newton/IRLS logistic regression; deterministic, no regularization."""
    beta = np.zeros(design.shape[1])
    for _ in range(max_iter):
        eta = design @ beta
        mu = expit(eta)
        w = np.maximum(mu * (1.0 - mu), 1e-12)
        grad = design.T @ (y - mu)
        hess = (design * w[:, None]).T @ design
        try:
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError as exc:
            raise SeparationError("propensity model Hessian is singular") from exc
        beta = beta + step
        if np.abs(step).max() < tol:
            break
    return beta


def estimate_ipw_binary(data: Dataset, contrast: ContrastSpec = ContrastSpec()) -> EstimateResult:
    """Stabilized IPW with a logistic propensity model and Hajek aggregation."""
    y = data.require_outcome()
    a = data.a
    if not is_binary_treatment(a) or np.unique(a).size < 2:
        raise DegenerateDataError("binary IPW requires A in {0,1} with both classes present")
    design = np.column_stack([np.ones(data.n), data.z])
    beta = _logistic_fit(design, a)
    propensity = expit(design @ beta)
    extreme = (propensity < 1e-6) | (propensity > 1.0 - 1e-6)
    if extreme.mean() > 0.01:
        raise SeparationError(
            f"propensities within 1e-6 of 0/1 for {extreme.mean():.1%} of rows"
        )
    p_treated = float(a.mean())
    weights = np.where(a == 1.0, p_treated / propensity, (1.0 - p_treated) / (1.0 - propensity))
    treated = a == 1.0
    mean1 = float((weights[treated] * y[treated]).sum() / weights[treated].sum())
    mean0 = float((weights[~treated] * y[~treated]).sum() / weights[~treated].sum())
    return EstimateResult(
        method="ipw",
        ate=contrast.delta * (mean1 - mean0),
        diagnostics={"max_weight": float(weights.max())},
    )


def estimate_ipw(data: Dataset, contrast: ContrastSpec = ContrastSpec()) -> EstimateResult:
    """Dispatch to the binary or continuous IPW variant based on the treatment values."""
    if is_binary_treatment(data.a) and np.unique(data.a).size == 2:
        return estimate_ipw_binary(data, contrast)
    return estimate_ipw_continuous(data, contrast)


def estimate_iv(data: Dataset, contrast: ContrastSpec = ContrastSpec()) -> EstimateResult:
    """Two-stage least squares treating the proxies as instruments."""
    y = data.require_outcome()
    stage1 = np.column_stack([np.ones(data.n), data.z])
    beta1, _ = ols(stage1, data.a, stage="iv_first_stage")
    a_hat = stage1 @ beta1
    if float(np.var(a_hat)) <= 1e-12 * max(float(np.var(data.a)), 1e-300):
        raise DegenerateDataError("first-stage fitted values have zero variance")
    beta2, cond = ols(np.column_stack([np.ones(data.n), a_hat]), y, stage="iv_second_stage")
    return EstimateResult(
        method="iv",
        ate=contrast.delta * float(beta2[1]),
        diagnostics={"condition_number": cond},
    )


def estimate_pci(
    data: Dataset, contrast: ContrastSpec = ContrastSpec(), split: PciSplit | None = None
) -> EstimateResult:
    """Regression-form proximal causal inference for one NCO/NCE split.

    Stage 1 regresses each negative-control outcome on [1, A, V, A*V]; stage 2
    regresses Y on [1, A, fitted NCOs, A * fitted NCOs]; stage 3 predicts each
    NCO from [1, V] alone, and the effect combines the stage-2 treatment
    block with those predictions.
    """
    y = data.require_outcome()
    if data.p % 2 != 0:
        raise DimensionError(f"PCI requires an even number of proxies, got p={data.p}")
    if split is None:
        half = data.p // 2
        split = PciSplit(tuple(range(half)), tuple(range(half, data.p)))
    if len(split.nco_indices) + len(split.nce_indices) != data.p:
        raise DimensionError("split does not match the number of proxy columns")
    w = data.z[:, split.nco_indices]
    v = data.z[:, split.nce_indices]
    a = data.a
    n, n_nco = w.shape
    ones = np.ones((n, 1))

    bridge_design = np.column_stack([ones, a, v, v * a[:, None]])
    wav = np.empty((n, n_nco))
    for i in range(n_nco):
        beta, _ = ols(bridge_design, w[:, i], stage="pci_nco_bridge")
        wav[:, i] = bridge_design @ beta

    outcome_design = np.column_stack([ones, a, wav, wav * a[:, None]])
    beta, cond = ols(outcome_design, y, stage="pci_outcome")
    gamma = np.concatenate([[beta[1]], beta[2 + n_nco :]])

    marginal_design = np.column_stack([ones, v])
    w_tilde = np.empty((n, n_nco))
    for i in range(n_nco):
        mbeta, _ = ols(marginal_design, w[:, i], stage="pci_nco_marginal")
        w_tilde[:, i] = marginal_design @ mbeta

    cate = gamma[0] + w_tilde @ gamma[1:]
    return EstimateResult(
        method="pci",
        ate=contrast.delta * float(cate.mean()),
        cate=contrast.delta * cate,
        diagnostics={"condition_number": cond},
    )


def estimate_pci_averaged(
    data: Dataset, contrast: ContrastSpec = ContrastSpec(), splits=()
) -> EstimateResult:
    """PCI averaged over several splits (exact summation, order independent)."""
    splits = list(splits)
    if not splits:
        raise ValueError("at least one split is required")
    estimates = [estimate_pci(data, contrast, split).ate for split in splits]
    return EstimateResult(
        method="pci",
        ate=math.fsum(estimates) / len(estimates),
        diagnostics={
            "n_splits": len(splits),
            "split_min": min(estimates),
            "split_max": max(estimates),
            "split_median": float(np.median(estimates)),
        },
    )


def enumerate_even_splits(
    p: int, mode: str = "all", r: int | None = None, seed: int | None = None
) -> list[PciSplit]:
    """All (or a seeded sample of) even NCO/NCE partitions of p proxies.

    Splits are ordered lexicographically by their NCO index tuples; sampling
    draws without replacement from that ordering, so a (r, seed) pair always
    yields the same list.
    """
    if p % 2 != 0:
        raise DimensionError(f"even split requires even p, got {p}")
    half = p // 2
    total = math.comb(p, half)
    if mode == "all":
        if total > 10**6:
            raise ValueError(f"{total} splits exceed the enumeration cap; sample instead")
        ncos = list(combinations(range(p), half))
    elif mode == "sample":
        if r is None or seed is None:
            raise ValueError("sample mode requires r and seed")
        rng = np.random.default_rng(seed)
        picks = sorted(rng.choice(total, size=min(r, total), replace=False).tolist())
        ncos = [_unrank_combination(p, half, rank) for rank in picks]
    else:
        raise ValueError(f"unknown mode {mode!r}")
    splits = []
    for nco in ncos:
        nce = tuple(i for i in range(p) if i not in set(nco))
        splits.append(PciSplit(tuple(nco), nce))
    return splits


def _unrank_combination(n: int, k: int, rank: int) -> tuple[int, ...]:
    """rank-th k-combination of range(n) in lexicographic order."""
    combo = []
    start = 0
    remaining = k
    while remaining > 0:
        for candidate in range(start, n):
            block = math.comb(n - candidate - 1, remaining - 1)
            if rank < block:
                combo.append(candidate)
                start = candidate + 1
                remaining -= 1
                break
            rank -= block
    return tuple(combo)
