import numpy as np
import pytest

from kinap.grid import VelocityGrid


def double_peak(rho, u, T, grid):
    """Two counter-propagating Gaussian humps with equal mass."""
    d2p = (grid.vx - u[0]) ** 2
    d2m = (grid.vx + u[0]) ** 2
    if grid.dim == 2:
        d2p = d2p + (grid.vy - u[1]) ** 2
        d2m = d2m + (grid.vy + u[1]) ** 2
    norm = rho / (2.0 * (2.0 * np.pi * T) ** (grid.dim / 2.0))
    return norm * (np.exp(-d2p / (2 * T)) + np.exp(-d2m / (2 * T)))


def smooth_profiles_1a(x):
    rho = (2.0 + np.sin(2.0 * np.pi * x)) / 3.0
    T = (3.0 + np.cos(2.0 * np.pi * x)) / 4.0
    return rho, T


@pytest.fixture(scope="session")
def vgrid16():
    return VelocityGrid(6.0, 16, dim=2)


@pytest.fixture(scope="session")
def vgrid32():
    return VelocityGrid(8.4, 32, dim=2)


@pytest.fixture()
def rng():
    return np.random.default_rng(20240817)
