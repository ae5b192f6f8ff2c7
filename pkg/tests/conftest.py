import numpy as np
import pytest

from proxyadjust import MimicParams
from proxyadjust.fitting import ascent_violations, reset_ascent_violations


@pytest.fixture(scope="session", autouse=True)
def em_ascent_monitor():
    """Every EM fit anywhere in the suite must keep the log-likelihood monotone."""
    reset_ascent_violations()
    yield
    assert ascent_violations() == 0, (
        f"{ascent_violations()} EM steps decreased the log-likelihood beyond slack"
    )


def random_params(
    rng: np.random.Generator,
    p: int,
    k: int,
    m: int = 0,
    treatment_unique_variance: float | None = None,
) -> MimicParams:
    """A random, well-conditioned parameter set for oracle checks."""
    return MimicParams(
        loadings=rng.normal(scale=0.8, size=(p, k)),
        unique_variances=rng.uniform(0.3, 1.5, size=p),
        intercepts=rng.normal(size=p),
        cause_coefficients=rng.normal(scale=0.5, size=(k, m)),
        treatment_loadings=rng.normal(scale=0.8, size=k),
        treatment_intercept=float(rng.normal()),
        treatment_unique_variance=(
            treatment_unique_variance
            if treatment_unique_variance is not None
            else float(rng.uniform(0.5, 2.0))
        ),
    )
