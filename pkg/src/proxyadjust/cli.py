"""Command-line interface.

Subcommands:

* ``simulate``  — replicated scenario runs across methods; writes raw and
  summary CSVs (and prints the summary table).
* ``estimate``  — one estimate on a delimited data file with a role map,
  optionally with a bootstrap confidence interval.
* ``reproduce`` — canned figure recipes; writes CSVs plus SVG renderings.
* ``example-data`` — synthetic EHR-style sample and role map for trying out
  ``estimate``.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from .comparators import enumerate_even_splits, estimate_pci
from .data_io import ingest, load_role_map
from .errors import ProxyAdjustError
from .estimators import (
    ContrastSpec,
    EstimateResult,
    estimate_latent_proxy,
    warm_started_latent_estimator,
)
from .harness import (
    METHODS,
    ExperimentPlan,
    GridPoint,
    run_experiment,
    run_method,
    summarize,
    write_raw_csv,
    write_summary_csv,
)
from .inference import BootstrapConfig, bootstrap_ci
from .reproduce import FIGURE_IDS, run_figure
from .simgen import SCENARIO_IDS
from .synthetic_ehr import write_ehr_sample


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="proxyadjust",
        description="Proxy-based adjustment for unmeasured confounding",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="replicated scenario runs across methods")
    sim.add_argument("--scenario", required=True, choices=SCENARIO_IDS)
    sim.add_argument("--n", type=int, required=True, help="sample size per replicate")
    sim.add_argument("--reps", type=int, default=200, help="number of replications")
    sim.add_argument(
        "--methods",
        default="latent,linear,ipw,pci",
        help=f"comma-separated subset of {','.join(METHODS)}",
    )
    sim.add_argument("--seed", type=int, default=0, help="master seed (64-bit unsigned)")
    sim.add_argument("--out", required=True, help="output directory")
    sim.add_argument("--p", type=int, default=None, help="proxy count (pk_ratio only)")
    sim.add_argument(
        "--pci-splits", type=int, default=1, help="NCO/NCE splits averaged per replicate"
    )

    est = sub.add_parser("estimate", help="one estimate on a delimited data file")
    est.add_argument("--data", required=True, help="CSV file (header row required)")
    est.add_argument("--roles", required=True, help="role-map JSON file")
    est.add_argument("--method", required=True, choices=METHODS)
    est.add_argument("--a0", type=float, default=0.0, help="reference treatment level")
    est.add_argument("--a1", type=float, default=1.0, help="comparison treatment level")
    est.add_argument("--bootstrap", type=int, default=0, help="bootstrap resamples (0 = none)")
    est.add_argument("--seed", type=int, default=0, help="bootstrap seed")
    est.add_argument("--tab", action="store_true", help="tab-delimited input")

    rep = sub.add_parser("reproduce", help="canned figure recipes (CSV + SVG)")
    rep.add_argument("--figure", required=True, choices=FIGURE_IDS)
    rep.add_argument("--full", action="store_true", help="full-fidelity replication counts")
    rep.add_argument("--out", required=True, help="output directory")
    rep.add_argument("--seed", type=int, default=0)
    rep.add_argument(
        "--reps", type=int, default=None, help="override replication count (smoke runs)"
    )

    ex = sub.add_parser("example-data", help="write a synthetic EHR-style sample")
    ex.add_argument("--out", required=True, help="output directory")
    ex.add_argument("--n", type=int, default=800)
    ex.add_argument("--seed", type=int, default=0)
    return parser


def _print_summary(rows) -> None:
    header = f"{'scenario':<22}{'method':<12}{'n':>6}{'median':>10}{'q25':>10}{'q75':>10}{'MAE':>10}{'fail':>6}{'flag':>6}"
    print(header)
    print("-" * len(header))
    for r in rows:
        print(
            f"{r.scenario:<22}{r.method:<12}{r.n:>6}{r.median:>10.4f}{r.q25:>10.4f}"
            f"{r.q75:>10.4f}{r.mean_abs_error:>10.4f}{r.n_failed:>6}{r.n_flagged:>6}"
        )


def _cmd_simulate(args) -> int:
    methods = tuple(m.strip() for m in args.methods.split(",") if m.strip())
    plan = ExperimentPlan(
        grid=(GridPoint(args.scenario, args.n, p=args.p),),
        methods=methods,
        replications=args.reps,
        master_seed=args.seed,
        pci_splits=args.pci_splits,
    )
    rows, truths = run_experiment(plan)
    summary = summarize(rows, truths)
    out = Path(args.out)
    write_raw_csv(rows, out / "raw.csv")
    write_summary_csv(summary, out / "summary.csv")
    _print_summary(summary)
    truth = next(iter(truths.values()))
    print(f"\ntrue effect: {truth:.4f}")
    print(f"wrote {out / 'raw.csv'} and {out / 'summary.csv'}")
    return 0


def _estimate_once(data, method: str, contrast: ContrastSpec, seed: int):
    """Point estimate for the CLI; PCI surveys every even split (case-study style).

    Splits whose regressions are rank deficient are skipped and counted; the
    reported estimate is the median over the surviving splits.
    """
    if method == "pci":
        total = math.comb(data.p, data.p // 2)
        if total <= 1000:
            splits = enumerate_even_splits(data.p, mode="all")
        else:
            splits = enumerate_even_splits(data.p, mode="sample", r=1000, seed=seed)
        estimates = []
        n_failed = 0
        for split in splits:
            try:
                estimates.append(estimate_pci(data, contrast, split).ate)
            except ProxyAdjustError:
                n_failed += 1
        if not estimates:
            raise ProxyAdjustError("every NCO/NCE split failed its regressions")
        estimates.sort()
        return EstimateResult(
            method="pci",
            ate=float(np.median(estimates)),
            diagnostics={
                "n_splits": len(splits),
                "n_failed_splits": n_failed,
                "split_min": estimates[0],
                "split_max": estimates[-1],
            },
        )
    return run_method(method, data, contrast, split_seed=seed)


def _cmd_estimate(args) -> int:
    roles = load_role_map(args.roles)
    data, report = ingest(args.data, roles, delimiter="\t" if args.tab else ",")
    print(
        f"ingested {report.rows_kept}/{report.rows_read} rows "
        f"(dropped {report.rows_dropped_missing_treatment_outcome} missing treatment/outcome, "
        f"{report.rows_dropped_excess_missing} with excess missing cells; "
        f"imputed {report.cells_imputed} cells)"
    )
    contrast = ContrastSpec(a0=args.a0, a1=args.a1)
    result = _estimate_once(data, args.method, contrast, args.seed)
    line = f"method={args.method} n={data.n} ate={result.ate:.6f}"
    if args.bootstrap:
        config = BootstrapConfig(resamples=args.bootstrap, seed=args.seed)
        if args.method == "latent":
            estimator = warm_started_latent_estimator(data, contrast)
        else:
            estimator = lambda d: _estimate_once(d, args.method, contrast, args.seed)
        boot = bootstrap_ci(data, estimator, config)
        line += (
            f" ci95=[{boot.ci_lower:.6f}, {boot.ci_upper:.6f}]"
            f" (resamples={args.bootstrap}, failed={boot.n_failed})"
        )
    print(line)
    if result.diagnostics:
        details = ", ".join(f"{k}={v}" for k, v in sorted(result.diagnostics.items()))
        print(f"diagnostics: {details}")
    return 0


def _cmd_reproduce(args) -> int:
    outputs = run_figure(args.figure, args.out, full=args.full, seed=args.seed, reps=args.reps)
    if "rows" in outputs:
        _print_summary(outputs["rows"])
        if outputs["n_flagged"]:
            print(f"flagged outliers (|estimate| > 10x truth): {outputs['n_flagged']}")
    if "records" in outputs:
        for rec in outputs["records"]:
            print(
                f"{rec['scenario']:<20} coverage={rec['coverage']:.3f} "
                f"mean_width={rec['mean_width']:.3f} ({rec['replications']} reps "
                f"x {rec['resamples']} resamples)"
            )
    for key in ("raw", "summary", "figure"):
        if key in outputs:
            print(f"wrote {outputs[key]}")
    return 0


def _cmd_example_data(args) -> int:
    csv_path, roles_path = write_ehr_sample(args.out, n=args.n, seed=args.seed)
    print(f"wrote {csv_path} and {roles_path}")
    print(f"try: proxyadjust estimate --data {csv_path} --roles {roles_path} --method latent")
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    handlers = {
        "simulate": _cmd_simulate,
        "estimate": _cmd_estimate,
        "reproduce": _cmd_reproduce,
        "example-data": _cmd_example_data,
    }
    try:
        return handlers[args.command](args)
    except ProxyAdjustError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
