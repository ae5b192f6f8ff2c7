"""Maximum-likelihood fitting of the latent proxy model.

EM with closed-form M-steps on the stacked indicator vector W = [Z; A] and
causes X. All E-step aggregates are linear/quadratic in (W, X), so each
iteration runs on the sample's second-moment matrices and costs O(p^3)
regardless of n. The latent basis is pinned afterwards by rotating the
loadings to lower-triangular form with a positive diagonal.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import (
    DegenerateDataError,
    DimensionError,
    FitSelectionError,
    RankDeficiencyError,
    SingularMatrixError,
)
from .model import Dataset, MimicParams, rotate_params

__all__ = [
    "FitConfig",
    "FitResult",
    "fit_mimic",
    "fit_candidates",
    "select_k",
    "rotate_to_canonical",
    "aic",
    "max_identified_k",
    "ascent_violations",
    "reset_ascent_violations",
]

# Count of EM steps anywhere in the process that decreased the log-likelihood
# beyond the permitted slack. Monotonicity is an algebraic property of the
# closed-form M-steps, so a nonzero count signals an implementation bug.
_ASCENT_VIOLATIONS = 0
_ASCENT_SLACK = 1e-10


def ascent_violations() -> int:
    return _ASCENT_VIOLATIONS


def reset_ascent_violations() -> None:
    global _ASCENT_VIOLATIONS
    _ASCENT_VIOLATIONS = 0


@dataclass(frozen=True)
class FitConfig:
    """Knobs for EM fitting and factor-dimension selection.

    ``k_candidates=None`` means "1 .. max_identified_k(p)" for the data at hand.
    """

    max_iterations: int = 1000
    loglik_rel_tolerance: float = 1e-8
    variance_floor_fraction: float = 1e-4
    k_candidates: tuple[int, ...] | None = None
    fix_treatment_variance: bool = False

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.loglik_rel_tolerance <= 0:
            raise ValueError("loglik_rel_tolerance must be > 0")
        if self.variance_floor_fraction <= 0:
            raise ValueError("variance_floor_fraction must be > 0")
        if self.k_candidates is not None:
            cands = tuple(sorted(set(int(k) for k in self.k_candidates)))
            if not cands:
                raise ValueError("k_candidates must be nonempty")
            if cands[0] < 1:
                raise ValueError("k_candidates must be positive")
            object.__setattr__(self, "k_candidates", cands)


@dataclass(frozen=True)
class FitResult:
    """A fitted model in canonical form plus fit diagnostics."""

    params: MimicParams
    loglik: float
    aic: float
    k: int
    iterations: int
    converged: bool
    loglik_trace: np.ndarray
    heywood_events: int

    def __post_init__(self):
        object.__setattr__(self, "loglik_trace", np.asarray(self.loglik_trace, dtype=float))


def aic(loglik: float, p: int, k: int, m: int, fix_treatment_variance: bool = False) -> float:
    """Akaike information criterion for a fitted k-factor model.

    Free parameters: (p+1)k loadings minus k(k-1)/2 rotation constraints,
    p+1 intercepts, p+1 unique variances (one fewer if the treatment
    variance is fixed), and k*m cause coefficients.
    """
    if p < 1 or k < 1:
        raise ValueError("p and k must be positive")
    q = (p + 1) * k - k * (k - 1) // 2 + 2 * (p + 1) + k * m
    if fix_treatment_variance:
        q -= 1
    return -2.0 * loglik + 2.0 * q


def max_identified_k(p: int) -> int:
    """Largest factor count with non-negative degrees of freedom on p+1 indicators."""
    q = p + 1
    best = 0
    for k in range(1, q + 1):
        cov_params = q * k - k * (k - 1) // 2 + q
        if q * (q + 1) // 2 - cov_params >= 0:
            best = k
    if best == 0:
        raise DimensionError(f"no identified factor model exists for p={p}")
    return best


def rotate_to_canonical(params: MimicParams) -> MimicParams:
    """Rotate the latent basis so loadings are lower triangular, positive diagonal.

    Uses the LQ factorization of the leading k rows of the loadings.
    Rank-deficient loadings (degenerate leading block) are rejected.
    """
    lam = params.loadings
    k = params.k
    top = lam[:k, :]
    # LQ of top via QR of its transpose: top = R' Q', so top @ Q is lower triangular.
    q_mat, r = np.linalg.qr(top.T)
    diag = np.diag(r)
    if np.any(np.abs(diag) < 1e-12 * max(1.0, np.abs(lam).max())):
        raise RankDeficiencyError(
            "loadings are rank deficient; canonical rotation undefined",
            stage="canonical_rotation",
            condition_number=float("inf"),
        )
    signs = np.sign(diag)
    q_mat = q_mat * signs
    return rotate_params(params, q_mat)


@dataclass(frozen=True)
class _Moments:
    """Sufficient statistics of (W, X): means and centered second moments."""

    n: int
    w_mean: np.ndarray
    x_mean: np.ndarray
    c_ww: np.ndarray
    c_wx: np.ndarray
    c_xx: np.ndarray


def _moments(data: Dataset) -> _Moments:
    w = np.column_stack([data.z, data.a])
    n = data.n
    w_mean = w.mean(axis=0)
    wc = w - w_mean
    c_ww = (wc.T @ wc) / n
    if data.m > 0:
        x_mean = data.x.mean(axis=0)
        xc = data.x - x_mean
        c_wx = (wc.T @ xc) / n
        c_xx = (xc.T @ xc) / n
    else:
        x_mean = np.zeros(0)
        c_wx = np.zeros((w.shape[1], 0))
        c_xx = np.zeros((0, 0))
    return _Moments(n=n, w_mean=w_mean, x_mean=x_mean, c_ww=c_ww, c_wx=c_wx, c_xx=c_xx)


def _loglik_from_moments(
    mo: _Moments, load: np.ndarray, psi: np.ndarray, mu: np.ndarray, gamma: np.ndarray
) -> float:
    q = load.shape[0]
    sigma = load @ load.T + np.diag(psi)
    chol = cho_factor(sigma, lower=True)
    h = load @ gamma if gamma.size else np.zeros((q, 0))
    r = mo.w_mean - mu - (h @ mo.x_mean if h.size else 0.0)
    s_e = mo.c_ww + np.outer(r, r)
    if h.size:
        s_e = s_e - mo.c_wx @ h.T - h @ mo.c_wx.T + h @ mo.c_xx @ h.T
    logdet = 2.0 * float(np.sum(np.log(np.diag(chol[0]))))
    quad = float(np.trace(cho_solve(chol, s_e)))
    return -0.5 * mo.n * (q * np.log(2.0 * np.pi) + logdet + quad)


def _principal_axis_start(mo: _Moments, k: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Deterministic start: scaled leading eigenvectors of the residual correlation."""
    c = mo.c_ww
    if mo.c_xx.size:
        beta = np.linalg.solve(mo.c_xx + 1e-12 * np.eye(mo.c_xx.shape[0]), mo.c_wx.T)
        c = c - mo.c_wx @ beta
    sd = np.sqrt(np.maximum(np.diag(c), 1e-12))
    corr = c / np.outer(sd, sd)
    eigvals, eigvecs = np.linalg.eigh(corr)
    order = np.argsort(eigvals)[::-1][:k]
    vecs = eigvecs[:, order]
    # Fix eigenvector signs so the start does not depend on LAPACK conventions.
    flip = np.sign(vecs[np.abs(vecs).argmax(axis=0), np.arange(k)])
    flip[flip == 0] = 1.0
    load_std = vecs * flip * np.sqrt(np.maximum(eigvals[order], 0.0))
    psi_std = np.maximum(1.0 - (load_std**2).sum(axis=1), 0.1)
    load = load_std * sd[:, None]
    psi = psi_std * sd**2
    mu = mo.w_mean.copy()
    return load, psi, mu


def fit_mimic(
    data: Dataset, k: int, config: FitConfig = FitConfig(), init: MimicParams | None = None
) -> FitResult:
    """Fit the k-factor latent proxy model to (Z, A, X) by EM.

    Non-convergence within ``config.max_iterations`` is reported through
    ``converged=False``, not an exception. Unique variances are floored at
    ``variance_floor_fraction`` times each indicator's sample variance and
    floor events are counted (``heywood_events``).

    Parameters
    ----------
    init
        Optional warm-start parameters (e.g. a fit of the same k on the
        full sample when refitting bootstrap resamples).
    """
    global _ASCENT_VIOLATIONS
    p = data.p
    q = p + 1
    if not 1 <= k < q:
        raise DimensionError(f"k={k} must satisfy 1 <= k < p+1 = {q}")
    if data.n <= q:
        raise DegenerateDataError(f"need n > p+1 = {q} rows, got {data.n}")
    w = np.column_stack([data.z, data.a])
    sample_var = w.var(axis=0)
    names = list(data.z_names) + [data.treatment_name]
    for j, v in enumerate(sample_var):
        if v <= 0:
            raise DegenerateDataError(
                f"column {names[j]!r} has zero variance", column=names[j]
            )

    mo = _moments(data)
    m = data.m
    # EM runs with the causes centered (an exact reparameterization absorbed
    # by the intercepts); this decouples the intercept and cause-coefficient
    # updates, which otherwise exchange mass for thousands of iterations.
    x_shift = mo.x_mean
    if m:
        mo = _Moments(
            n=mo.n, w_mean=mo.w_mean, x_mean=np.zeros(m),
            c_ww=mo.c_ww, c_wx=mo.c_wx, c_xx=mo.c_xx,
        )
    floor = config.variance_floor_fraction * sample_var
    fix_last = config.fix_treatment_variance

    if init is not None:
        if init.p != p or init.k != k or init.m != m:
            raise DimensionError(
                f"init has (p,k,m)=({init.p},{init.k},{init.m}), expected ({p},{k},{m})"
            )
        load = init.augmented_loadings().copy()
        psi = np.maximum(init.augmented_variances().copy(), floor)
        mu = init.augmented_intercepts().copy()
        gamma = init.cause_coefficients.copy()
        if m:
            mu = mu + load @ (gamma @ x_shift)
    else:
        load, psi, mu = _principal_axis_start(mo, k)
        psi = np.maximum(psi, floor)
        gamma = np.zeros((k, m))
    if fix_last:
        psi[-1] = 1.0

    eye_k = np.eye(k)
    trace = []
    prev_ll = -np.inf
    heywood = 0
    converged = False
    iterations = 0
    for iterations in range(1, config.max_iterations + 1):
        # E-step: posterior of U per row enters only through moment aggregates.
        f = load.T / psi
        prec = f @ load + eye_k
        chol = cho_factor(0.5 * (prec + prec.T), lower=True)
        v = cho_solve(chol, eye_k)
        v = 0.5 * (v + v.T)
        proj = v @ f                                   # k x q
        qx = v @ gamma if m else np.zeros((k, 0))      # k x m
        t = proj @ (mo.w_mean - mu) + (qx @ mo.x_mean if m else 0.0)
        c_ws = mo.c_ww @ proj.T
        c_ss = proj @ c_ws + v
        c_xs = np.zeros((m, k))
        if m:
            c_ws = c_ws + mo.c_wx @ qx.T
            pcwx = proj @ mo.c_wx
            c_ss = c_ss + pcwx @ qx.T + qx @ pcwx.T + qx @ mo.c_xx @ qx.T
            c_xs = mo.c_wx.T @ proj.T + mo.c_xx @ qx.T

        # M-step: loadings/intercepts by least squares on expected statistics,
        # then unique variances, then cause coefficients.
        load = np.linalg.solve(0.5 * (c_ss + c_ss.T), c_ws.T).T
        mu = mo.w_mean - load @ t
        psi_new = np.diag(mo.c_ww) - np.einsum("ij,ij->i", load, c_ws)
        clipped = psi_new < floor
        psi = np.where(clipped, floor, psi_new)
        heywood += int(np.count_nonzero(clipped[:-1] if fix_last else clipped))
        if fix_last:
            psi[-1] = 1.0
        if m:
            sx = c_xs.T + np.outer(t, mo.x_mean)
            xx = mo.c_xx + np.outer(mo.x_mean, mo.x_mean)
            gamma = np.linalg.solve(xx, sx.T).T

        ll = _loglik_from_moments(mo, load, psi, mu, gamma)
        trace.append(ll)
        if np.isfinite(prev_ll):
            if ll < prev_ll - _ASCENT_SLACK * max(1.0, abs(prev_ll)):
                _ASCENT_VIOLATIONS += 1
            if abs(ll - prev_ll) <= config.loglik_rel_tolerance * max(1.0, abs(prev_ll)):
                converged = True
                break
        prev_ll = ll

    if m:
        mu = mu - load @ (gamma @ x_shift)  # back to the uncentered parameterization
    params = MimicParams(
        loadings=load[:p, :],
        unique_variances=psi[:p],
        intercepts=mu[:p],
        cause_coefficients=gamma,
        treatment_loadings=load[p, :],
        treatment_intercept=mu[p],
        treatment_unique_variance=psi[p],
    )
    try:
        params = rotate_to_canonical(params)
    except RankDeficiencyError:
        pass  # keep the unrotated solution; selection treats it like any fit
    final_ll = trace[-1]
    return FitResult(
        params=params,
        loglik=final_ll,
        aic=aic(final_ll, p, k, m, fix_treatment_variance=fix_last),
        k=k,
        iterations=iterations,
        converged=converged,
        loglik_trace=np.asarray(trace),
        heywood_events=heywood,
    )


def _candidate_ks(data: Dataset, config: FitConfig) -> tuple[int, ...]:
    if config.k_candidates is not None:
        return config.k_candidates
    return tuple(range(1, max_identified_k(data.p) + 1))


def fit_candidates(
    data: Dataset,
    config: FitConfig = FitConfig(),
    inits: dict[int, MimicParams] | None = None,
) -> tuple[dict[int, FitResult], dict[int, str]]:
    """Fit every candidate factor count; returns (fits by k, failure reasons by k)."""
    fits: dict[int, FitResult] = {}
    failures: dict[int, str] = {}
    for k in _candidate_ks(data, config):
        try:
            init = inits.get(k) if inits else None
            result = fit_mimic(data, k, config, init=init)
        except (DegenerateDataError, DimensionError, SingularMatrixError,
                np.linalg.LinAlgError) as exc:
            failures[k] = str(exc)
            continue
        if result.converged:
            fits[k] = result
        else:
            failures[k] = f"EM did not converge in {result.iterations} iterations"
    return fits, failures


def select_k(
    data: Dataset,
    config: FitConfig = FitConfig(),
    inits: dict[int, MimicParams] | None = None,
) -> FitResult:
    """Fit all candidate factor counts and return the converged fit with lowest AIC.

    Ties break toward the smaller k. Raises FitSelectionError when no
    candidate converges, listing the per-k failures.
    """
    fits, failures = fit_candidates(data, config, inits=inits)
    if not fits:
        raise FitSelectionError(failures)
    best_k = min(fits, key=lambda k: (fits[k].aic, k))
    return fits[best_k]
