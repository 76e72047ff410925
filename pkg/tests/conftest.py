import numpy as np
import pytest

from nsv4 import spectral as sp


@pytest.fixture(scope="session")
def grid8():
    return sp.make_grid(8)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def retained_modes(grid):
    """Integer wave indices of every retained site, shape (S, 4)."""
    m = grid.modes.reshape(4, -1).T
    return m[grid.dealias_mask.reshape(-1)]
