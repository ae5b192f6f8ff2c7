"""Exception types shared across the package."""

from __future__ import annotations


class ProxyAdjustError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(ProxyAdjustError):
    """An input has an incompatible shape; the message names the offending dimension."""


class SingularMatrixError(ProxyAdjustError):
    """A matrix that must be positive definite failed its factorization.

    Carries the smallest eigenvalue observed so callers can report how
    close to singular the matrix was.
    """

    def __init__(self, message: str, min_eigenvalue: float | None = None):
        if min_eigenvalue is not None:
            message = f"{message} (min eigenvalue {min_eigenvalue:.3e})"
        super().__init__(message)
        self.min_eigenvalue = min_eigenvalue


class DegenerateDataError(ProxyAdjustError):
    """Input data is degenerate (e.g. a zero-variance column)."""

    def __init__(self, message: str, column: str | None = None):
        super().__init__(message)
        self.column = column


class RankDeficiencyError(ProxyAdjustError):
    """A regression design is rank deficient or too ill-conditioned to trust.

    ``stage`` labels which regression failed; ``condition_number`` is the
    ratio of extreme singular values of the offending design.
    """

    def __init__(self, message: str, stage: str = "", condition_number: float = float("inf")):
        super().__init__(message)
        self.stage = stage
        self.condition_number = condition_number


class SeparationError(ProxyAdjustError):
    """Logistic propensity model separated the classes (weights unusable)."""


class EstimationError(ProxyAdjustError):
    """A multi-stage estimator failed; ``stage`` says where."""

    def __init__(self, message: str, stage: str = ""):
        super().__init__(message)
        self.stage = stage


class FitSelectionError(ProxyAdjustError):
    """Every candidate factor dimension failed to produce a usable fit."""

    def __init__(self, failures: dict[int, str]):
        lines = ", ".join(f"k={k}: {reason}" for k, reason in sorted(failures.items()))
        super().__init__(f"no candidate factor dimension converged ({lines})")
        self.failures = dict(failures)


class UnstableBootstrapError(ProxyAdjustError):
    """Too many bootstrap resamples failed for the interval to be trusted."""

    def __init__(self, n_failed: int, resamples: int):
        super().__init__(
            f"{n_failed}/{resamples} bootstrap resamples failed (>20%); estimate unstable"
        )
        self.n_failed = n_failed


class IngestError(ProxyAdjustError):
    """A delimited input file could not be ingested.

    ``row`` is the 0-based data-row index (header excluded) when the
    problem is cell-level.
    """

    def __init__(self, message: str, row: int | None = None, column: str | None = None):
        if row is not None or column is not None:
            where = ", ".join(
                s for s in (f"row {row}" if row is not None else "",
                            f"column {column!r}" if column is not None else "") if s
            )
            message = f"{message} ({where})"
        super().__init__(message)
        self.row = row
        self.column = column
