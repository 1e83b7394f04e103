import numpy as np
import pytest
from scipy.spatial.distance import cdist


def random_metric(rng, n, dim=2):
    pts = rng.random((n, dim))
    return cdist(pts, pts)


def random_prob(rng, n, sparsity=0.0):
    w = rng.random(n) * (rng.random(n) >= sparsity)
    w[rng.integers(n)] += 0.05
    return w / w.sum()


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)
