import numpy as np
import pytest

from snlsim.spectral import make_grid


@pytest.fixture
def grid1():
    return make_grid(1, 64, 8 * np.pi)


@pytest.fixture
def grid2():
    return make_grid(2, 16, 2 * np.pi)


@pytest.fixture
def grid3():
    return make_grid(3, 16, 4 * np.pi)


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


def random_field(grid, rng, smooth=True):
    """Band-limited random complex field (no Nyquist content)."""
    from snlsim.spectral import GridField

    c = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
    if smooth:
        c = c * np.exp(-0.05 * grid.xi_squared)
    c = np.where(grid.nyquist_mask(), 0, c)
    return GridField.from_coefficients(grid, c)
