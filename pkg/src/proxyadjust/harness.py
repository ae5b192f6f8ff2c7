"""Experiment orchestration: replicated scenario runs, summaries, CSV output.

Rows are keyed by (scenario label, method, n, replicate) and always emitted
in that sorted order, so outputs are byte-identical for a given plan and
master seed however the work is scheduled.
"""

from __future__ import annotations

import csv
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .comparators import (
    enumerate_even_splits,
    estimate_ipw,
    estimate_iv,
    estimate_linear,
    estimate_pci,
    estimate_pci_averaged,
    estimate_unadjusted,
)
from .errors import ProxyAdjustError
from .estimators import ContrastSpec, EstimateResult, estimate_latent_proxy
from .fitting import FitConfig
from .model import Dataset
from .simgen import ScenarioSpec, generate, scenario

__all__ = [
    "METHODS",
    "GridPoint",
    "ExperimentPlan",
    "RawResult",
    "SummaryRow",
    "run_experiment",
    "run_method",
    "summarize",
    "write_raw_csv",
    "write_summary_csv",
    "read_raw_csv",
    "scenario_label",
]

METHODS = ("latent", "linear", "ipw", "iv", "pci", "unadjusted")

RAW_HEADER = "scenario,method,n,replicate,seed,estimate,failed,failure_stage"
SUMMARY_HEADER = (
    "scenario,method,n,replications,median,q25,q75,"
    "whisker_low,whisker_high,mean_abs_error,n_failed"
)

# Estimates beyond this multiple of |true effect| are flagged (but retained).
OUTLIER_MULTIPLE = 10.0


@dataclass(frozen=True)
class GridPoint:
    """One cell of the scenario grid: scenario at sample size n (p for pk_ratio)."""

    scenario_id: str
    n: int
    p: int | None = None


@dataclass(frozen=True)
class ExperimentPlan:
    """A replicated run: grid x methods x replications under one master seed."""

    grid: tuple[GridPoint, ...]
    methods: tuple[str, ...]
    replications: int
    master_seed: int = 0
    pci_splits: int = 10
    contrast: ContrastSpec = ContrastSpec()
    fit_config: FitConfig = FitConfig()
    noise_scale_is_sd: bool = False

    def __post_init__(self):
        if not self.grid:
            raise ValueError("plan needs a nonempty scenario grid")
        if not self.methods:
            raise ValueError("plan needs a nonempty method set")
        unknown = [m for m in self.methods if m not in METHODS]
        if unknown:
            raise ValueError(f"unknown methods {unknown}; valid: {METHODS}")
        if self.replications < 1:
            raise ValueError("replications must be positive")
        object.__setattr__(self, "grid", tuple(self.grid))
        object.__setattr__(self, "methods", tuple(self.methods))


@dataclass(frozen=True)
class RawResult:
    scenario: str
    method: str
    n: int
    replicate: int
    seed: int
    estimate: float | None
    failed: bool
    failure_stage: str = ""


@dataclass(frozen=True)
class SummaryRow:
    """Per-(scenario, method, n) distribution summary of replicate estimates.

    Quartiles use linear-interpolation quantiles; the whiskers are the Tukey
    fences clipped to the observed extremes. ``n_flagged`` counts retained
    outliers (|estimate| > 10 |true|) and is reported via the API, not the
    summary CSV.
    """

    scenario: str
    method: str
    n: int
    replications: int
    median: float
    q25: float
    q75: float
    whisker_low: float
    whisker_high: float
    mean_abs_error: float
    n_failed: int
    n_flagged: int = 0


def scenario_label(point: GridPoint) -> str:
    if point.p is None:
        return point.scenario_id
    return f"{point.scenario_id}_p{point.p}"


def replicate_seed(master_seed: int, label: str, n: int, replicate: int) -> int:
    """Data seed for one replicate; shared by every method on that replicate."""
    ss = np.random.SeedSequence([master_seed, zlib.crc32(label.encode()), n, replicate])
    return int(ss.generate_state(1, np.uint64)[0])


def run_method(
    method: str,
    data: Dataset,
    contrast: ContrastSpec = ContrastSpec(),
    fit_config: FitConfig = FitConfig(),
    pci_splits: int = 1,
    split_seed: int = 0,
) -> EstimateResult:
    """Dispatch one method name to its estimator.

    PCI draws ``pci_splits`` NCO/NCE partitions from the deterministic
    ``split_seed`` stream and averages over them; with exchangeable proxies
    this approximates the average over every even division.
    """
    if method == "latent":
        return estimate_latent_proxy(data, contrast, fit_config)
    if method == "linear":
        return estimate_linear(data, contrast)
    if method == "ipw":
        return estimate_ipw(data, contrast)
    if method == "iv":
        return estimate_iv(data, contrast)
    if method == "unadjusted":
        return estimate_unadjusted(data, contrast)
    if method == "pci":
        splits = enumerate_even_splits(data.p, mode="sample", r=pci_splits, seed=split_seed)
        if len(splits) == 1:
            return estimate_pci(data, contrast, splits[0])
        return estimate_pci_averaged(data, contrast, splits)
    raise ValueError(f"unknown method {method!r}")


def _failure_stage(exc: Exception) -> str:
    stage = getattr(exc, "stage", "")
    return stage or type(exc).__name__


def run_experiment(plan: ExperimentPlan) -> tuple[list[RawResult], dict[str, float]]:
    """Execute the plan; returns raw rows plus the true effect per scenario label.

    One row per (scenario, method, replicate); estimator failures become
    failure rows, never aborts. Deterministic given the plan and master seed.
    """
    rows: list[RawResult] = []
    truths: dict[str, float] = {}
    for point in plan.grid:
        label = scenario_label(point)
        for rep in range(plan.replications):
            seed = replicate_seed(plan.master_seed, label, point.n, rep)
            spec = scenario(
                point.scenario_id,
                n=point.n,
                seed=seed,
                p=point.p,
                noise_scale_is_sd=plan.noise_scale_is_sd,
            )
            sample = generate(spec)
            truths[label] = sample.true_ate
            split_seed = int(
                np.random.SeedSequence([seed, zlib.crc32(b"pci_split")]).generate_state(1)[0]
            )
            for method in plan.methods:
                try:
                    result = run_method(
                        method,
                        sample.dataset,
                        plan.contrast,
                        plan.fit_config,
                        pci_splits=plan.pci_splits,
                        split_seed=split_seed,
                    )
                    rows.append(
                        RawResult(label, method, point.n, rep, seed, float(result.ate), False)
                    )
                except (ProxyAdjustError, np.linalg.LinAlgError) as exc:
                    rows.append(
                        RawResult(
                            label, method, point.n, rep, seed, None, True, _failure_stage(exc)
                        )
                    )
    rows.sort(key=lambda r: (r.scenario, r.method, r.n, r.replicate))
    return rows, truths


def summarize(rows: list[RawResult], truths: dict[str, float]) -> list[SummaryRow]:
    """Group rows by (scenario, method, n) and summarize estimate distributions."""
    if not rows:
        raise ValueError("no results to summarize")
    groups: dict[tuple[str, str, int], list[RawResult]] = {}
    for row in rows:
        groups.setdefault((row.scenario, row.method, row.n), []).append(row)
    out = []
    for (scen, method, n), members in sorted(groups.items()):
        estimates = np.asarray([r.estimate for r in members if not r.failed], dtype=float)
        n_failed = sum(1 for r in members if r.failed)
        truth = truths.get(scen)
        if estimates.size:
            q25, med, q75 = np.quantile(estimates, [0.25, 0.5, 0.75], method="linear")
            iqr = q75 - q25
            wlo = max(float(estimates.min()), float(q25 - 1.5 * iqr))
            whi = min(float(estimates.max()), float(q75 + 1.5 * iqr))
            mae = float(np.mean(np.abs(estimates - truth))) if truth is not None else float("nan")
            flagged = (
                int(np.sum(np.abs(estimates) > OUTLIER_MULTIPLE * abs(truth)))
                if truth is not None
                else 0
            )
        else:
            med = q25 = q75 = wlo = whi = mae = float("nan")
            flagged = 0
        out.append(
            SummaryRow(
                scenario=scen,
                method=method,
                n=n,
                replications=len(members),
                median=float(med),
                q25=float(q25),
                q75=float(q75),
                whisker_low=wlo,
                whisker_high=whi,
                mean_abs_error=mae,
                n_failed=n_failed,
                n_flagged=flagged,
            )
        )
    return out


def _fmt(value: float | None) -> str:
    if value is None:
        return ""
    return repr(float(value))


def write_raw_csv(rows: list[RawResult], path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(RAW_HEADER.split(","))
        for r in rows:
            writer.writerow(
                [
                    r.scenario,
                    r.method,
                    r.n,
                    r.replicate,
                    r.seed,
                    _fmt(r.estimate) if not r.failed else "",
                    int(r.failed),
                    r.failure_stage,
                ]
            )


def write_summary_csv(rows: list[SummaryRow], path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(SUMMARY_HEADER.split(","))
        for r in rows:
            writer.writerow(
                [
                    r.scenario,
                    r.method,
                    r.n,
                    r.replications,
                    _fmt(r.median),
                    _fmt(r.q25),
                    _fmt(r.q75),
                    _fmt(r.whisker_low),
                    _fmt(r.whisker_high),
                    _fmt(r.mean_abs_error),
                    r.n_failed,
                ]
            )


def read_raw_csv(path) -> list[RawResult]:
    rows = []
    with Path(path).open(newline="") as handle:
        reader = csv.DictReader(handle)
        for rec in reader:
            failed = rec["failed"] == "1"
            rows.append(
                RawResult(
                    scenario=rec["scenario"],
                    method=rec["method"],
                    n=int(rec["n"]),
                    replicate=int(rec["replicate"]),
                    seed=int(rec["seed"]),
                    estimate=None if failed or rec["estimate"] == "" else float(rec["estimate"]),
                    failed=failed,
                    failure_stage=rec["failure_stage"],
                )
            )
    return rows
