"""Proxy-based adjustment for unmeasured confounding.

A vector of proxy measurements is related to a latent confounder through a
Gaussian factor model with the treatment as an extra indicator; closed-form
posteriors of the confounder feed an outcome regression whose interaction
structure yields conditional and average treatment effects. Comparator
estimators (unadjusted, linear, IPW, IV, proximal), seeded scenario
generators, bootstrap intervals, and a replicated-experiment harness round
out the toolkit.
"""

from .comparators import (
    PciSplit,
    enumerate_even_splits,
    estimate_ipw,
    estimate_ipw_binary,
    estimate_ipw_continuous,
    estimate_iv,
    estimate_linear,
    estimate_pci,
    estimate_pci_averaged,
    estimate_unadjusted,
)
from .data_io import IngestReport, RoleMap, export_dataset, ingest, load_role_map
from .errors import ProxyAdjustError
from .estimators import (
    ContrastSpec,
    EstimateResult,
    OutcomeModel,
    ate_from_params,
    estimate_latent_proxy,
    outcome_regression,
    warm_started_latent_estimator,
)
from .fitting import (
    FitConfig,
    FitResult,
    aic,
    fit_mimic,
    max_identified_k,
    rotate_to_canonical,
    select_k,
)
from .harness import (
    ExperimentPlan,
    GridPoint,
    RawResult,
    SummaryRow,
    run_experiment,
    summarize,
    write_raw_csv,
    write_summary_csv,
)
from .inference import (
    BootstrapConfig,
    BootstrapResult,
    CoverageResult,
    bootstrap_ci,
    coverage_experiment,
)
from .model import (
    Dataset,
    GaussianConditioner,
    GaussianPosterior,
    MimicParams,
    implied_moments,
    loglik,
    posterior_mean_matrix,
    posterior_u,
    rotate_params,
)
from .simgen import (
    GeneratedSample,
    ScenarioParams,
    ScenarioSpec,
    generate,
    make_loadings,
    sample_skew_normal,
    scenario,
    true_ate_for,
)

__version__ = "0.1.0"

__all__ = [
    "BootstrapConfig",
    "BootstrapResult",
    "ContrastSpec",
    "CoverageResult",
    "Dataset",
    "EstimateResult",
    "ExperimentPlan",
    "FitConfig",
    "FitResult",
    "GaussianConditioner",
    "GaussianPosterior",
    "GeneratedSample",
    "GridPoint",
    "IngestReport",
    "MimicParams",
    "OutcomeModel",
    "PciSplit",
    "ProxyAdjustError",
    "RawResult",
    "RoleMap",
    "ScenarioParams",
    "ScenarioSpec",
    "SummaryRow",
    "aic",
    "ate_from_params",
    "bootstrap_ci",
    "coverage_experiment",
    "enumerate_even_splits",
    "estimate_ipw",
    "estimate_ipw_binary",
    "estimate_ipw_continuous",
    "estimate_iv",
    "estimate_latent_proxy",
    "estimate_linear",
    "estimate_pci",
    "estimate_pci_averaged",
    "estimate_unadjusted",
    "export_dataset",
    "fit_mimic",
    "generate",
    "implied_moments",
    "ingest",
    "load_role_map",
    "loglik",
    "make_loadings",
    "max_identified_k",
    "outcome_regression",
    "posterior_mean_matrix",
    "posterior_u",
    "rotate_params",
    "rotate_to_canonical",
    "run_experiment",
    "sample_skew_normal",
    "scenario",
    "select_k",
    "summarize",
    "true_ate_for",
    "write_raw_csv",
    "write_summary_csv",
]
