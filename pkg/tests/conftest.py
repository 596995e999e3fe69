import numpy as np
import pytest

from hyperlatent.model import ModelParams, UncenteredParams


def random_params(rng, m, n, K, scale=1.0, beta=None) -> ModelParams:
    alpha = rng.uniform(-1, 1, n)
    alpha -= alpha.mean()
    F = scale * rng.standard_normal((m, K))
    F -= F.mean(axis=0)
    Z = scale * rng.standard_normal((n, K))
    b = rng.uniform(-2, 0) if beta is None else beta
    return ModelParams(b, alpha, F, Z)


def random_uncentered(rng, m, n, K, scale=1.0) -> UncenteredParams:
    return UncenteredParams(rng.uniform(-2, 1, n), scale * rng.standard_normal((m, K)), scale * rng.standard_normal((n, K)))


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)
