import numpy as np
import pytest

from sdnls import Grid, NoiseOperator, SpectralField


@pytest.fixture
def grid64():
    return Grid(d=1, L=2.0 * np.pi, N=64)


@pytest.fixture
def band_phi(grid64):
    # phi_k = 0.1 / (1 + k^2) on |k| <= 8 (kappa_k = k at L = 2 pi)
    return NoiseOperator.band(grid64, amplitude=0.1, k_max=8, decay_power=2.0)


def random_field(grid, rng, decay=0.3, amplitude=1.0):
    """Smooth random field: Gaussian coefficients with exponential decay in |k|."""
    c = rng.standard_normal(grid.n_modes) + 1j * rng.standard_normal(grid.n_modes)
    c *= amplitude * np.exp(-decay * grid.k_inf)
    return SpectralField(grid, c)
