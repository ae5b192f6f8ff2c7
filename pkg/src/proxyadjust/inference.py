"""Nonparametric bootstrap confidence intervals and coverage experiments."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ProxyAdjustError, UnstableBootstrapError
from .estimators import EstimateResult
from .model import Dataset
from .simgen import ScenarioSpec, generate

__all__ = [
    "BootstrapConfig",
    "BootstrapResult",
    "CoverageResult",
    "bootstrap_ci",
    "coverage_experiment",
]


@dataclass(frozen=True)
class BootstrapConfig:
    """Row-resampling bootstrap settings (percentile intervals)."""

    resamples: int = 2000
    level: float = 0.95
    seed: int = 0
    failure_policy: str = "skip_and_count"

    def __post_init__(self):
        if self.resamples < 2:
            raise ValueError("resamples must be >= 2")
        if not 0.0 < self.level < 1.0:
            raise ValueError("level must lie in (0, 1)")
        if self.failure_policy not in ("skip_and_count", "abort"):
            raise ValueError("failure_policy must be 'skip_and_count' or 'abort'")


@dataclass(frozen=True)
class BootstrapResult:
    ci_lower: float
    ci_upper: float
    point: float
    n_failed: int


def _as_ate(value) -> float:
    if isinstance(value, EstimateResult):
        return float(value.ate)
    return float(value)


def bootstrap_ci(
    data: Dataset,
    estimator: Callable[[Dataset], float | EstimateResult],
    config: BootstrapConfig = BootstrapConfig(),
) -> BootstrapResult:
    """Percentile bootstrap interval for an estimator over row resamples.

    The estimator must succeed on the full data (its point estimate anchors
    the result). Resample failures follow ``config.failure_policy``: skipped
    and counted by default, with an error once more than 20% fail. Resample
    i draws its rows from ``SeedSequence([seed, i])``, so intervals are
    reproducible and independent of evaluation order.
    """
    point = _as_ate(estimator(data))
    n = data.n
    estimates = []
    n_failed = 0
    for i in range(config.resamples):
        rng = np.random.default_rng(np.random.SeedSequence([config.seed, i]))
        resample = data.take(rng.integers(0, n, size=n))
        try:
            estimates.append(_as_ate(estimator(resample)))
        except ProxyAdjustError:
            if config.failure_policy == "abort":
                raise
            n_failed += 1
    if n_failed > 0.2 * config.resamples:
        raise UnstableBootstrapError(n_failed, config.resamples)
    tail = 0.5 * (1.0 - config.level)
    lo, hi = np.quantile(np.asarray(estimates), [tail, 1.0 - tail], method="linear")
    return BootstrapResult(ci_lower=float(lo), ci_upper=float(hi), point=point, n_failed=n_failed)


@dataclass(frozen=True)
class CoverageResult:
    coverage: float
    mean_width: float
    replications: int
    n_failed_replications: int


def coverage_experiment(
    spec: ScenarioSpec,
    estimator: Callable[[Dataset], float | EstimateResult] | None = None,
    config: BootstrapConfig = BootstrapConfig(),
    replications: int = 100,
    estimator_factory: Callable[[Dataset], Callable[[Dataset], float | EstimateResult]]
    | None = None,
) -> CoverageResult:
    """Fraction of replications whose bootstrap CI contains the scenario's true effect.

    Pass either ``estimator`` (applied to every dataset) or
    ``estimator_factory`` (called with each replication's full dataset and
    returning the estimator to bootstrap; used to warm-start resample
    refits). Replication r uses data seed SeedSequence([spec.seed, r]) and
    bootstrap seed SeedSequence([config.seed, r]); failed replications follow
    the failure policy and are excluded from the coverage denominator.
    """
    if replications < 10:
        raise ValueError("need at least 10 replications")
    if (estimator is None) == (estimator_factory is None):
        raise ValueError("pass exactly one of estimator or estimator_factory")
    truth = spec.params.true_ate()
    hits = 0
    widths = []
    n_failed = 0
    done = 0
    for r in range(replications):
        rep_seed = int(np.random.SeedSequence([spec.seed, r]).generate_state(1)[0])
        rep_spec = ScenarioSpec(
            scenario_id=spec.scenario_id,
            n=spec.n,
            seed=rep_seed,
            params=spec.params,
            noise_scale_is_sd=spec.noise_scale_is_sd,
        )
        data = generate(rep_spec).dataset
        boot_seed = int(np.random.SeedSequence([config.seed, r]).generate_state(1)[0])
        rep_config = BootstrapConfig(
            resamples=config.resamples,
            level=config.level,
            seed=boot_seed,
            failure_policy=config.failure_policy,
        )
        try:
            rep_estimator = estimator if estimator is not None else estimator_factory(data)
            result = bootstrap_ci(data, rep_estimator, rep_config)
        except ProxyAdjustError:
            if config.failure_policy == "abort":
                raise
            n_failed += 1
            continue
        done += 1
        widths.append(result.ci_upper - result.ci_lower)
        if result.ci_lower <= truth <= result.ci_upper:
            hits += 1
    coverage = hits / done if done else float("nan")
    return CoverageResult(
        coverage=coverage,
        mean_width=float(np.mean(widths)) if widths else float("nan"),
        replications=done,
        n_failed_replications=n_failed,
    )
