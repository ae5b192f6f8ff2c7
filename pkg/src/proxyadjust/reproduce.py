"""Canned experiment recipes behind the ``reproduce`` CLI subcommand.

Each figure id maps to a replicated plan at desk scale (200 replications,
minutes on a laptop); ``full=True`` switches to 1000 replications and the
wider grids. Outputs per figure: a raw CSV, a summary CSV, and an SVG.
"""

from __future__ import annotations

import csv
from pathlib import Path

from . import figures
from .estimators import warm_started_latent_estimator
from .harness import (
    ExperimentPlan,
    GridPoint,
    run_experiment,
    summarize,
    write_raw_csv,
    write_summary_csv,
)
from .inference import BootstrapConfig, coverage_experiment
from .simgen import scenario, true_ate_for

__all__ = ["FIGURE_IDS", "run_figure"]

FIGURE_IDS = ("2a", "2b", "3a", "3b", "3c", "3d", "3e", "coverage")

_BOX_FIGURES = {
    "3a": ("quadratic", ("latent", "linear", "ipw", "pci"), "quadratic outcome, linear estimator"),
    "3b": ("skew_normal", ("latent", "linear", "ipw", "pci"), "skew-normal latent variable"),
    "3c": ("binary_probit", ("latent", "linear", "ipw", "pci"), "binary treatment estimated as continuous"),
    "3d": ("direct_confounder", ("latent", "linear", "ipw", "pci"), "proxies are direct confounders"),
    "3e": ("iv_as_proxy", ("latent", "linear", "ipw", "pci", "iv"), "proxies are instruments"),
}

_COVERAGE_SCENARIOS = (
    ("coverage", 500),
    ("binary_probit", 500),
)
_COVERAGE_SCENARIOS_FULL = (
    ("coverage", 500),
    ("quadratic", 500),
    ("skew_normal", 500),
    ("binary_probit", 500),
    ("direct_confounder", 500),
    ("iv_as_proxy", 500),
)


def run_figure(
    figure: str, out_dir, full: bool = False, seed: int = 0, reps: int | None = None
) -> dict:
    """Run one figure's plan; writes CSVs and an SVG, returns output paths.

    ``reps`` overrides the replication count (and, for coverage, the
    replication/resample pair becomes reps x reps) for quick smoke runs.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if figure == "coverage":
        return _run_coverage(out_dir, full=full, seed=seed, reps=reps)
    if reps is None:
        reps = 1000 if full else 200
    if figure == "2a":
        grid = tuple(GridPoint("baseline", n) for n in (250, 500, 1000, 2000, 4000))
        methods = ("latent", "linear", "ipw", "pci")
    elif figure == "2b":
        ps = tuple(range(2, 21, 2)) if full else (2, 4, 6, 16)
        grid = tuple(GridPoint("pk_ratio", 1000, p=p) for p in ps)
        methods = ("latent", "linear", "ipw", "pci")
    elif figure in _BOX_FIGURES:
        scenario_id, methods, _ = _BOX_FIGURES[figure]
        grid = (GridPoint(scenario_id, 1000),)
    else:
        raise ValueError(f"unknown figure {figure!r}; valid: {FIGURE_IDS}")

    plan = ExperimentPlan(grid=grid, methods=methods, replications=reps, master_seed=seed)
    rows, truths = run_experiment(plan)
    summary = summarize(rows, truths)
    raw_path = out_dir / f"fig{figure}_raw.csv"
    summary_path = out_dir / f"fig{figure}_summary.csv"
    write_raw_csv(rows, raw_path)
    write_summary_csv(summary, summary_path)
    svg_path = out_dir / f"fig{figure}.svg"
    truth = truths[next(iter(truths))]
    if figure == "2a":
        figures.render_accuracy_by_n(summary, truth, svg_path)
    elif figure == "2b":
        figures.render_accuracy_by_ratio(summary, truth, k=2, path=svg_path)
    else:
        _, _, title = _BOX_FIGURES[figure]
        figures.render_method_boxes(summary, truth, title, svg_path)
    flagged = sum(r.n_flagged for r in summary)
    return {
        "raw": raw_path,
        "summary": summary_path,
        "figure": svg_path,
        "n_flagged": flagged,
        "rows": summary,
    }


def _run_coverage(out_dir: Path, full: bool, seed: int, reps: int | None = None) -> dict:
    scenarios = _COVERAGE_SCENARIOS_FULL if full else _COVERAGE_SCENARIOS
    records = []
    for scenario_id, n in scenarios:
        replications = 100
        resamples = 500
        if full and scenario_id == "coverage":
            replications, resamples = 150, 2000
        if reps is not None:
            replications = resamples = reps
        spec = scenario(scenario_id, n=n, seed=seed)
        config = BootstrapConfig(resamples=resamples, seed=seed)
        result = coverage_experiment(
            spec,
            estimator_factory=warm_started_latent_estimator,
            config=config,
            replications=replications,
        )
        records.append(
            {
                "scenario": scenario_id,
                "n": n,
                "replications": result.replications,
                "resamples": resamples,
                "coverage": result.coverage,
                "mean_width": result.mean_width,
                "n_failed_replications": result.n_failed_replications,
                "true_ate": true_ate_for(scenario_id),
            }
        )
    csv_path = out_dir / "coverage.csv"
    with csv_path.open("w", newline="") as handle:
        writer = csv.DictWriter(handle, fieldnames=list(records[0]))
        writer.writeheader()
        writer.writerows(records)
    svg_path = out_dir / "coverage.svg"
    figures.render_coverage_bars(
        [r["scenario"] for r in records],
        [r["coverage"] for r in records],
        level=0.95,
        path=svg_path,
    )
    return {"summary": csv_path, "figure": svg_path, "records": records}
