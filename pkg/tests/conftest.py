import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_cloud(rng, n):
    """Random cloud in the unit cube, generic position (no exact ties)."""
    return rng.uniform(-1.0, 1.0, size=(n, 3))
