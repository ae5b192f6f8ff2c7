"""Seeded data generators for the simulation scenarios.

Scenario parameters live in checked-in text tables under ``scenario_data/``
so they can be audited directly. Randomness is organized as one master seed
per replication with per-variable streams derived by a stable hash:

    stream(tag) = default_rng(SeedSequence([seed, crc32(scenario_id), crc32(tag)]))

so regenerating with the same ScenarioSpec is bit-identical, and the U, Z,
A, and Y draws do not interact.
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, replace
from importlib import resources

import numpy as np

from .errors import DimensionError
from .model import Dataset, MimicParams

__all__ = [
    "ScenarioParams",
    "ScenarioSpec",
    "GeneratedSample",
    "SCENARIO_IDS",
    "scenario",
    "generate",
    "sample_skew_normal",
    "make_loadings",
    "true_ate_for",
]

SCENARIO_IDS = (
    "baseline",
    "quadratic",
    "skew_normal",
    "binary_probit",
    "direct_confounder",
    "iv_as_proxy",
    "pk_ratio",
    "coverage",
)


@dataclass(frozen=True)
class ScenarioParams:
    """One scenario's full parameter block.

    ``family`` selects the generator: "factor" (latent U with proxy loadings),
    "direct" (Z itself confounds), or "iv" (Z is an instrument). ``psi_sd``
    holds noise standard deviations as published; ``outcome_noise`` is a
    variance unless the spec's standard-deviation switch is set.
    """

    family: str
    alpha: np.ndarray
    gamma: np.ndarray
    outcome_noise: float
    loadings: np.ndarray | None = None
    psi_sd: np.ndarray | None = None
    nu: np.ndarray | None = None
    b: np.ndarray | None = None
    c: float = 0.0
    latent: str = "normal"
    skew_shape: float = 0.0
    skew_location: float = 0.0
    skew_scale: float = 1.0
    treatment_model: str = "linear"
    outcome_basis: str = "linear"
    a_coef: np.ndarray | None = None
    a_coef_z: np.ndarray | None = None
    a_coef_u: np.ndarray | None = None

    def to_mimic_params(self) -> MimicParams:
        """Generating parameters as a measurement model (factor family, linear A)."""
        if self.family != "factor":
            raise DimensionError(f"scenario family {self.family!r} has no measurement model")
        if self.treatment_model != "linear":
            raise DimensionError("probit treatment has no linear measurement model for A")
        k = self.loadings.shape[1]
        return MimicParams(
            loadings=self.loadings,
            unique_variances=self.psi_sd**2,
            intercepts=self.nu,
            cause_coefficients=np.zeros((k, 0)),
            treatment_loadings=self.b,
            treatment_intercept=self.c,
            treatment_unique_variance=1.0,
        )

    def latent_mean(self) -> float:
        """E[U] for a scalar skew-normal latent; 0 for the normal case."""
        if self.latent != "skew_normal":
            return 0.0
        delta = self.skew_shape / math.sqrt(1.0 + self.skew_shape**2)
        return self.skew_location + self.skew_scale * delta * math.sqrt(2.0 / math.pi)

    def true_ate(self) -> float:
        """Analytic E[Y(1) - Y(0)] = gamma' E[basis] for the scenario."""
        gamma = self.gamma
        if self.family in ("direct", "iv"):
            return float(gamma[0])  # E[Z] = 0 and E[U] = 0
        if self.outcome_basis == "quadratic":
            # scalar normal latent: E[1, U, U^2] = [1, 0, 1]
            return float(gamma[0] + gamma[2])
        mean_u = self.latent_mean()
        if self.latent == "skew_normal":
            return float(gamma[0] + gamma[1] * mean_u)
        return float(gamma[0])


@dataclass(frozen=True)
class ScenarioSpec:
    """A concrete simulation request: scenario, sample size, seed, parameters."""

    scenario_id: str
    n: int
    seed: int
    params: ScenarioParams
    noise_scale_is_sd: bool = False

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be positive")
        if self.seed < 0:
            raise ValueError("seed must be a nonnegative integer")


@dataclass(frozen=True)
class GeneratedSample:
    """Simulated dataset plus ground truth withheld from estimators."""

    dataset: Dataset
    u: np.ndarray | None
    true_ate: float


def _parse_table(text: str) -> dict:
    values: dict = {}
    lines = [ln.strip() for ln in text.splitlines()]
    i = 0
    while i < len(lines):
        line = lines[i]
        i += 1
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        key = parts[0]
        if len(parts) == 1:  # matrix block, terminated by "end"
            rows = []
            while i < len(lines) and lines[i].strip() != "end":
                if lines[i] and not lines[i].startswith("#"):
                    rows.append([float(v) for v in lines[i].split()])
                i += 1
            i += 1  # consume "end"
            values[key] = np.asarray(rows)
        elif key in ("latent", "outcome_basis", "treatment_model"):
            values[key] = parts[1:]
        else:
            nums = [float(v) for v in parts[1:]]
            values[key] = nums[0] if len(nums) == 1 else np.asarray(nums)
    return values


def _load_params(scenario_id: str) -> ScenarioParams:
    base = scenario_id if scenario_id in SCENARIO_IDS else None
    if base is None:
        raise DimensionError(f"unknown scenario {scenario_id!r}; known: {SCENARIO_IDS}")
    path = resources.files("proxyadjust").joinpath(f"scenario_data/{scenario_id}.txt")
    raw = _parse_table(path.read_text())
    alpha = np.atleast_1d(raw["alpha"])
    gamma = np.atleast_1d(raw["gamma"])
    noise = float(raw["outcome_noise"])
    if scenario_id == "direct_confounder":
        return ScenarioParams(
            family="direct",
            alpha=alpha,
            gamma=gamma,
            outcome_noise=noise,
            psi_sd=np.atleast_1d(raw["psi_sd"]),
            a_coef=np.atleast_1d(raw["a_coef"]),
        )
    if scenario_id == "iv_as_proxy":
        return ScenarioParams(
            family="iv",
            alpha=alpha,
            gamma=gamma,
            outcome_noise=noise,
            a_coef_z=np.atleast_1d(raw["a_coef_z"]),
            a_coef_u=np.atleast_1d(raw["a_coef_u"]),
            c=float(raw["c"]),
        )
    latent = raw.get("latent", ["normal"])
    lam = np.atleast_2d(raw["lambda"])
    if lam.shape[0] == 1 and int(raw["p"]) > 1:
        lam = lam.T
    kwargs = dict(
        family="factor",
        alpha=alpha,
        gamma=gamma,
        outcome_noise=noise,
        loadings=lam,
        psi_sd=np.atleast_1d(raw["psi_sd"]),
        nu=np.atleast_1d(raw["nu"]),
        b=np.atleast_1d(raw["b"]),
        c=float(raw["c"]),
        treatment_model=raw["treatment_model"][0],
        outcome_basis=raw["outcome_basis"][0],
        latent=latent[0],
    )
    if latent[0] == "skew_normal":
        kwargs.update(
            skew_shape=float(latent[1]),
            skew_location=float(latent[2]),
            skew_scale=float(latent[3]),
        )
    return ScenarioParams(**kwargs)


def scenario(
    scenario_id: str,
    n: int,
    seed: int,
    p: int | None = None,
    noise_scale_is_sd: bool = False,
) -> ScenarioSpec:
    """Build a ScenarioSpec from the checked-in parameter tables.

    ``p`` truncates the pk_ratio layout to its leading p proxies (even p in
    2..20); it is rejected for other scenarios.
    """
    params = _load_params(scenario_id)
    if scenario_id == "pk_ratio":
        if p is None:
            p = 8
        if not (2 <= p <= 20):
            raise DimensionError(f"pk_ratio requires p in 2..20, got {p}")
        params = replace(
            params,
            loadings=params.loadings[:p],
            psi_sd=params.psi_sd[:p],
            nu=params.nu[:p],
        )
    elif p is not None:
        raise DimensionError(f"scenario {scenario_id!r} has a fixed proxy count")
    return ScenarioSpec(
        scenario_id=scenario_id,
        n=n,
        seed=seed,
        params=params,
        noise_scale_is_sd=noise_scale_is_sd,
    )


def true_ate_for(scenario_id: str, p: int | None = None) -> float:
    """Analytic true effect for a scenario id (seed and n play no role)."""
    return scenario(scenario_id, n=1, seed=0, p=p).params.true_ate()


def _stream(seed: int, scenario_id: str, tag: str) -> np.random.Generator:
    entropy = [int(seed), zlib.crc32(scenario_id.encode()), zlib.crc32(tag.encode())]
    return np.random.default_rng(np.random.SeedSequence(entropy))


def sample_skew_normal(shape: float, location: float, scale: float, n: int, seed) -> np.ndarray:
    """Skew-normal draws via the two-normal representation.

    z = delta*|N1| + sqrt(1-delta^2)*N2 with delta = shape/sqrt(1+shape^2),
    returned as location + scale*z. ``seed`` may be an int or a Generator.
    """
    if scale <= 0:
        raise ValueError("scale must be positive")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    delta = shape / math.sqrt(1.0 + shape**2)
    n1 = rng.standard_normal(n)
    n2 = rng.standard_normal(n)
    return location + scale * (delta * np.abs(n1) + math.sqrt(1.0 - delta**2) * n2)


def _outcome_basis(params: ScenarioParams, u: np.ndarray) -> np.ndarray:
    ones = np.ones((u.shape[0], 1))
    if params.outcome_basis == "quadratic":
        return np.column_stack([ones, u, u**2])
    return np.column_stack([ones, u])


def generate(spec: ScenarioSpec) -> GeneratedSample:
    """Draw one sample from the scenario's data-generating process."""
    params = spec.params
    n = spec.n
    y_sd = params.outcome_noise if spec.noise_scale_is_sd else math.sqrt(params.outcome_noise)
    eps_y = _stream(spec.seed, spec.scenario_id, "y").standard_normal(n) * y_sd
    if params.family == "factor":
        k = params.loadings.shape[1]
        rng_u = _stream(spec.seed, spec.scenario_id, "u")
        if params.latent == "skew_normal":
            u = sample_skew_normal(
                params.skew_shape, params.skew_location, params.skew_scale, n, rng_u
            )[:, None]
        else:
            u = rng_u.standard_normal((n, k))
        z = (
            u @ params.loadings.T
            + params.nu
            + _stream(spec.seed, spec.scenario_id, "z").standard_normal((n, params.loadings.shape[0]))
            * params.psi_sd
        )
        index = u @ params.b + params.c + _stream(spec.seed, spec.scenario_id, "a").standard_normal(n)
        a = (index >= 0).astype(float) if params.treatment_model == "probit" else index
        basis = _outcome_basis(params, u)
    elif params.family == "direct":
        p = params.psi_sd.shape[0]
        z = _stream(spec.seed, spec.scenario_id, "z").standard_normal((n, p)) * params.psi_sd
        a = z @ params.a_coef + _stream(spec.seed, spec.scenario_id, "a").standard_normal(n)
        u = None
        basis = np.column_stack([np.ones((n, 1)), z])
    elif params.family == "iv":
        u = _stream(spec.seed, spec.scenario_id, "u").standard_normal(
            (n, params.a_coef_u.shape[0])
        )
        z = _stream(spec.seed, spec.scenario_id, "z").standard_normal(
            (n, params.a_coef_z.shape[0])
        )
        a = (
            z @ params.a_coef_z
            + u @ params.a_coef_u
            + params.c
            + _stream(spec.seed, spec.scenario_id, "a").standard_normal(n)
        )
        basis = np.column_stack([np.ones((n, 1)), u])
    else:
        raise DimensionError(f"unknown scenario family {params.family!r}")
    y = basis @ params.alpha + a * (basis @ params.gamma) + eps_y
    dataset = Dataset(z=z, a=a, y=y)
    return GeneratedSample(dataset=dataset, u=u, true_ate=params.true_ate())


def make_loadings(p: int, k: int, communality_levels, seed) -> tuple[np.ndarray, np.ndarray]:
    """Random unit-variance loading structure with prescribed communalities.

    Row j gets communality ``levels[j % len(levels)]``: a random direction in
    factor space scaled so the squared row norm equals the communality, with
    unique variance 1 - communality. Returns (loadings, unique variances).
    """
    levels = np.atleast_1d(np.asarray(communality_levels, dtype=float))
    if k >= p:
        raise DimensionError(f"need k < p, got k={k}, p={p}")
    if np.any((levels <= 0) | (levels >= 1)):
        raise ValueError("communality levels must lie strictly inside (0, 1)")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    comm = levels[np.arange(p) % levels.shape[0]]
    for _ in range(100):
        directions = rng.standard_normal((p, k))
        directions /= np.linalg.norm(directions, axis=1, keepdims=True)
        lam = directions * np.sqrt(comm)[:, None]
        if np.linalg.matrix_rank(lam) == k:
            return lam, 1.0 - comm
    raise DimensionError("failed to draw full-column-rank loadings")
