import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def make_regression(rng, n=200, p=8, beta=None, noise=1.0):
    x = rng.standard_normal((n, p))
    if beta is None:
        beta = np.zeros(p)
        beta[:2] = [1.5, -0.8]
    y = x @ beta + noise * rng.standard_normal(n)
    return x, y
