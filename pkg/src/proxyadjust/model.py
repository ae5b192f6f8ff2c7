"""Latent proxy measurement model: parameters, implied moments, and posteriors.

The measurement model ties a k-dimensional latent confounder U to p observed
proxies Z and the treatment A:

    U ~ N(cause_coefficients @ x, I_k)
    Z = loadings @ U + intercepts + noise,          noise ~ N(0, diag(unique_variances))
    A = treatment_loadings @ U + treatment_intercept + e,   e ~ N(0, treatment_unique_variance)

Everything downstream (fitting, effect estimation) reduces to Gaussian
conditioning in this model, so the posterior of U given any subset of
(Z, A, x) is available in closed form.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import DegenerateDataError, DimensionError, SingularMatrixError

__all__ = [
    "MimicParams",
    "GaussianConditioner",
    "GaussianPosterior",
    "Dataset",
    "implied_moments",
    "loglik",
    "posterior_u",
    "posterior_mean_matrix",
    "rotate_params",
]


def _as_float_array(value, name: str, ndim: int) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.ndim != ndim:
        raise DimensionError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class MimicParams:
    """Parameters of the latent proxy model.

    Attributes
    ----------
    loadings : (p, k) array
        Proxy loadings on the latent factors.
    unique_variances : (p,) array
        Proxy-specific noise variances (strictly positive).
    intercepts : (p,) array
        Proxy intercepts.
    cause_coefficients : (k, m) array
        Effect of measured covariates on the latent mean; zero columns when m=0.
    treatment_loadings : (k,) array
        Latent loadings of the treatment indicator.
    treatment_intercept : float
    treatment_unique_variance : float
        Residual treatment variance (strictly positive). Fixed at 1 by the
        generative convention but estimated freely by default when fitting.
    """

    loadings: np.ndarray
    unique_variances: np.ndarray
    intercepts: np.ndarray
    cause_coefficients: np.ndarray
    treatment_loadings: np.ndarray
    treatment_intercept: float
    treatment_unique_variance: float

    def __post_init__(self):
        lam = _as_float_array(self.loadings, "loadings", 2)
        psi = _as_float_array(self.unique_variances, "unique_variances", 1)
        nu = _as_float_array(self.intercepts, "intercepts", 1)
        gamma = _as_float_array(self.cause_coefficients, "cause_coefficients", 2)
        b = _as_float_array(self.treatment_loadings, "treatment_loadings", 1)
        p, k = lam.shape
        if psi.shape[0] != p:
            raise DimensionError(f"unique_variances has length {psi.shape[0]}, expected p={p}")
        if nu.shape[0] != p:
            raise DimensionError(f"intercepts has length {nu.shape[0]}, expected p={p}")
        if b.shape[0] != k:
            raise DimensionError(f"treatment_loadings has length {b.shape[0]}, expected k={k}")
        if gamma.shape[0] != k:
            raise DimensionError(
                f"cause_coefficients has {gamma.shape[0]} rows, expected k={k}"
            )
        if np.any(psi <= 0):
            raise ValueError("unique_variances must be strictly positive")
        if float(self.treatment_unique_variance) <= 0:
            raise ValueError("treatment_unique_variance must be strictly positive")
        for name, arr in (("loadings", lam), ("unique_variances", psi), ("intercepts", nu),
                          ("cause_coefficients", gamma), ("treatment_loadings", b)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite values")
        object.__setattr__(self, "loadings", lam)
        object.__setattr__(self, "unique_variances", psi)
        object.__setattr__(self, "intercepts", nu)
        object.__setattr__(self, "cause_coefficients", gamma)
        object.__setattr__(self, "treatment_loadings", b)
        object.__setattr__(self, "treatment_intercept", float(self.treatment_intercept))
        object.__setattr__(
            self, "treatment_unique_variance", float(self.treatment_unique_variance)
        )

    @property
    def p(self) -> int:
        return self.loadings.shape[0]

    @property
    def k(self) -> int:
        return self.loadings.shape[1]

    @property
    def m(self) -> int:
        return self.cause_coefficients.shape[1]

    def augmented_loadings(self) -> np.ndarray:
        """Loadings of the stacked indicator vector [Z; A], shape (p+1, k)."""
        return np.vstack([self.loadings, self.treatment_loadings])

    def augmented_intercepts(self) -> np.ndarray:
        return np.append(self.intercepts, self.treatment_intercept)

    def augmented_variances(self) -> np.ndarray:
        return np.append(self.unique_variances, self.treatment_unique_variance)


@dataclass(frozen=True)
class GaussianPosterior:
    """Conditional law of the latent confounder: N(mean, covariance)."""

    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        mean = _as_float_array(self.mean, "mean", 1)
        cov = _as_float_array(self.covariance, "covariance", 2)
        if cov.shape != (mean.shape[0], mean.shape[0]):
            raise DimensionError(
                f"covariance shape {cov.shape} does not match mean length {mean.shape[0]}"
            )
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)


@dataclass(frozen=True)
class GaussianConditioner:
    """Precision/shift pair (M, d) defining a latent posterior N(M^-1 d, M^-1).

    The shift stored here excludes any covariate contribution; pass it via
    ``posterior(extra_shift=...)``.
    """

    precision: np.ndarray
    shift: np.ndarray

    def __post_init__(self):
        m = _as_float_array(self.precision, "precision", 2)
        d = _as_float_array(self.shift, "shift", 1)
        if m.shape != (d.shape[0], d.shape[0]):
            raise DimensionError(f"precision shape {m.shape} does not match shift {d.shape}")
        asym = np.abs(m - m.T).max()
        scale = max(np.abs(m).max(), 1.0)
        if asym > 1e-10 * scale:
            raise ValueError(f"precision is not symmetric (max asymmetry {asym:.3e})")
        object.__setattr__(self, "precision", m)
        object.__setattr__(self, "shift", d)

    def posterior(self, extra_shift: np.ndarray | None = None) -> GaussianPosterior:
        """Solve for N(M^-1 (d + extra_shift), M^-1) via Cholesky."""
        chol = _spd_cholesky(self.precision, what="latent precision")
        d = self.shift if extra_shift is None else self.shift + extra_shift
        mean = cho_solve(chol, d)
        cov = cho_solve(chol, np.eye(self.precision.shape[0]))
        cov = 0.5 * (cov + cov.T)
        return GaussianPosterior(mean=mean, covariance=cov)


def _spd_cholesky(matrix: np.ndarray, what: str):
    try:
        return cho_factor(matrix, lower=True)
    except np.linalg.LinAlgError as exc:
        min_eig = float(np.linalg.eigvalsh(matrix).min())
        raise SingularMatrixError(
            f"{what} is not positive definite; loadings are rank deficient", min_eig
        ) from exc


@dataclass(frozen=True)
class Dataset:
    """Observed sample: proxies Z, treatment A, optional outcome Y, covariates X.

    Column roles are carried alongside the arrays so file ingestion and
    estimators agree on which variable plays which part.
    """

    z: np.ndarray
    a: np.ndarray
    y: np.ndarray | None = None
    x: np.ndarray | None = None
    z_names: tuple[str, ...] = ()
    x_names: tuple[str, ...] = ()
    treatment_name: str = "A"
    outcome_name: str = "Y"

    def __post_init__(self):
        z = _as_float_array(self.z, "Z", 2)
        a = _as_float_array(self.a, "A", 1)
        n = z.shape[0]
        if n < 1:
            raise DegenerateDataError("dataset must contain at least one row")
        if a.shape[0] != n:
            raise DimensionError(f"A has length {a.shape[0]}, expected n={n}")
        y = self.y
        if y is not None:
            y = _as_float_array(y, "Y", 1)
            if y.shape[0] != n:
                raise DimensionError(f"Y has length {y.shape[0]}, expected n={n}")
        x = self.x
        if x is None:
            x = np.zeros((n, 0))
        else:
            x = _as_float_array(x, "X", 2)
            if x.shape[0] != n:
                raise DimensionError(f"X has {x.shape[0]} rows, expected n={n}")
        for name, arr in (("Z", z), ("A", a), ("Y", y), ("X", x)):
            if arr is not None and not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite values after ingestion")
        z_names = tuple(self.z_names) or tuple(f"Z{i+1}" for i in range(z.shape[1]))
        x_names = tuple(self.x_names) or tuple(f"X{i+1}" for i in range(x.shape[1]))
        if len(z_names) != z.shape[1]:
            raise DimensionError(f"{len(z_names)} proxy names for {z.shape[1]} proxy columns")
        if len(x_names) != x.shape[1]:
            raise DimensionError(f"{len(x_names)} covariate names for {x.shape[1]} columns")
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "z_names", z_names)
        object.__setattr__(self, "x_names", x_names)

    @property
    def n(self) -> int:
        return self.z.shape[0]

    @property
    def p(self) -> int:
        return self.z.shape[1]

    @property
    def m(self) -> int:
        return self.x.shape[1]

    @property
    def roles(self) -> dict[str, str]:
        """Column name -> role, with every column holding exactly one role."""
        mapping = {name: "proxy" for name in self.z_names}
        mapping.update({name: "covariate" for name in self.x_names})
        mapping[self.treatment_name] = "treatment"
        if self.y is not None:
            mapping[self.outcome_name] = "outcome"
        return mapping

    def take(self, indices) -> "Dataset":
        """Row subset (used by bootstrap resampling); preserves roles."""
        idx = np.asarray(indices, dtype=int)
        return Dataset(
            z=self.z[idx],
            a=self.a[idx],
            y=None if self.y is None else self.y[idx],
            x=self.x[idx],
            z_names=self.z_names,
            x_names=self.x_names,
            treatment_name=self.treatment_name,
            outcome_name=self.outcome_name,
        )

    def require_outcome(self) -> np.ndarray:
        if self.y is None:
            raise DegenerateDataError("dataset has no outcome column")
        return self.y


def _check_x(params: MimicParams, x) -> np.ndarray:
    if x is None:
        x = np.zeros(params.m)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape[0] != params.m:
        raise DimensionError(f"x has length {x.shape[0]}, expected m={params.m}")
    return x


def implied_moments(params: MimicParams, x=None) -> tuple[np.ndarray, np.ndarray]:
    """Mean and covariance of the stacked vector [Z; A] given covariates x.

    mean = [loadings; b'] @ (cause_coefficients @ x) + [intercepts; c]
    cov  = [loadings; b'] @ [loadings; b']' + diag(unique variances, treatment variance)
    """
    x = _check_x(params, x)
    laug = params.augmented_loadings()
    mean = laug @ (params.cause_coefficients @ x) + params.augmented_intercepts()
    cov = laug @ laug.T + np.diag(params.augmented_variances())
    return mean, cov


def loglik(params: MimicParams, data: Dataset) -> float:
    """Gaussian log-likelihood of (Z, A) given X under the implied model.

    Raises
    ------
    SingularMatrixError
        If the implied covariance fails its Cholesky factorization; the
        error carries the minimum eigenvalue.
    """
    if data.p != params.p:
        raise DimensionError(f"data has p={data.p} proxies, params expect {params.p}")
    if data.m != params.m:
        raise DimensionError(f"data has m={data.m} covariates, params expect {params.m}")
    laug = params.augmented_loadings()
    cov = laug @ laug.T + np.diag(params.augmented_variances())
    try:
        chol = cho_factor(cov, lower=True)
    except np.linalg.LinAlgError as exc:
        min_eig = float(np.linalg.eigvalsh(cov).min())
        raise SingularMatrixError("implied covariance is singular", min_eig) from exc
    w = np.column_stack([data.z, data.a])
    resid = w - params.augmented_intercepts()
    if params.m > 0:
        resid = resid - data.x @ (laug @ params.cause_coefficients).T
    solved = cho_solve(chol, resid.T)
    quad = float(np.sum(resid.T * solved))
    q = params.p + 1
    logdet = 2.0 * float(np.sum(np.log(np.diag(chol[0]))))
    return -0.5 * (data.n * (q * np.log(2.0 * np.pi) + logdet) + quad)


def conditioner(params: MimicParams, z, a: float | None = None) -> GaussianConditioner:
    """Precision/shift of the latent posterior given proxies (and optionally A).

    Without A: M = loadings' Psi^-1 loadings + I, d = loadings' Psi^-1 (z - intercepts).
    With A the treatment row b/sigma_A augments both.
    """
    z = _as_float_array(z, "z", 1)
    if z.shape[0] != params.p:
        raise DimensionError(f"z has length {z.shape[0]}, expected p={params.p}")
    lam = params.loadings
    inv_psi = 1.0 / params.unique_variances
    m = (lam.T * inv_psi) @ lam + np.eye(params.k)
    d = (lam.T * inv_psi) @ (z - params.intercepts)
    if a is not None:
        b = params.treatment_loadings
        s2 = params.treatment_unique_variance
        m = m + np.outer(b, b) / s2
        d = d + b * (float(a) - params.treatment_intercept) / s2
    return GaussianConditioner(precision=0.5 * (m + m.T), shift=d)


def posterior_u(params: MimicParams, z, a: float | None = None, x=None) -> GaussianPosterior:
    """Exact Gaussian posterior of the latent confounder.

    Conditions on Z=z (always), A=a (when given), and covariates x (when the
    model has causes). Matches direct conditioning of the joint Gaussian of
    (U, Z, A) given X.
    """
    x = _check_x(params, x)
    cond = conditioner(params, z, a)
    extra = params.cause_coefficients @ x if params.m > 0 else None
    return cond.posterior(extra_shift=extra)


def posterior_mean_matrix(
    params: MimicParams, z: np.ndarray, a: np.ndarray | None = None, x: np.ndarray | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Row-wise posterior means of U, sharing the (constant) posterior covariance.

    Returns
    -------
    means : (n, k) array
    covariance : (k, k) array
        The common posterior covariance (it does not depend on the row).
    """
    z = _as_float_array(z, "Z", 2)
    if z.shape[1] != params.p:
        raise DimensionError(f"Z has {z.shape[1]} columns, expected p={params.p}")
    lam = params.loadings
    inv_psi = 1.0 / params.unique_variances
    f = lam.T * inv_psi
    m = f @ lam + np.eye(params.k)
    d = (z - params.intercepts) @ f.T
    if a is not None:
        a = _as_float_array(a, "A", 1)
        b = params.treatment_loadings
        s2 = params.treatment_unique_variance
        m = m + np.outer(b, b) / s2
        d = d + np.outer(a - params.treatment_intercept, b / s2)
    if params.m > 0:
        if x is None:
            raise DimensionError("model has covariates but x was not supplied")
        x = _as_float_array(x, "X", 2)
        d = d + x @ params.cause_coefficients.T
    chol = _spd_cholesky(0.5 * (m + m.T), what="latent precision")
    means = cho_solve(chol, d.T).T
    cov = cho_solve(chol, np.eye(params.k))
    return means, 0.5 * (cov + cov.T)


def rotate_params(params: MimicParams, q: np.ndarray) -> MimicParams:
    """Apply an orthogonal change of latent basis: loadings Q, Q'b, Q'Gamma.

    Leaves the implied observed-data distribution (hence the likelihood)
    unchanged.
    """
    q = _as_float_array(q, "Q", 2)
    k = params.k
    if q.shape != (k, k):
        raise DimensionError(f"Q has shape {q.shape}, expected ({k}, {k})")
    if np.abs(q @ q.T - np.eye(k)).max() > 1e-8:
        raise ValueError("Q is not orthogonal")
    return MimicParams(
        loadings=params.loadings @ q,
        unique_variances=params.unique_variances,
        intercepts=params.intercepts,
        cause_coefficients=q.T @ params.cause_coefficients,
        treatment_loadings=q.T @ params.treatment_loadings,
        treatment_intercept=params.treatment_intercept,
        treatment_unique_variance=params.treatment_unique_variance,
    )
