import numpy as np
import pytest

from hetfx.dataset import Dataset


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def toy_dataset(n=40, p=3, seed=0, strata=None, clusters=None, y=None, d=None):
    """Small hand-controllable dataset for unit tests."""
    g = np.random.default_rng(seed)
    Z = g.random((n, p))
    if d is None:
        d = np.zeros(n, int)
        d[g.permutation(n)[: n // 2]] = 1
    if y is None:
        y = Z @ np.arange(1, p + 1) + d * 1.5 + g.standard_normal(n)
    return Dataset(
        outcome=y,
        treatment=d,
        covariates=Z,
        covariate_names=[f"x{j+1}" for j in range(p)],
        strata_id=strata,
        cluster_id=clusters,
    )
