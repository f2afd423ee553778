"""Transforms, normalization, and the scalar functionals."""

import numpy as np
import pytest

from sdnls import (
    ConfigurationError,
    Grid,
    SpectralField,
    abs_power_integral,
    energy,
    f1,
    mass,
    sobolev_norm_sq,
    tail_mass,
    to_physical,
    to_spectral,
)
from conftest import random_field

TWO_PI = 2.0 * np.pi


def direct_eval(field, derivative=False):
    """Mode-sum oracle for u (or grad u) at the grid points, no FFT involved."""
    g = field.grid
    assert g.d == 1
    x = np.arange(g.N) * g.h
    k = np.fft.fftfreq(g.N) * g.N
    kappa = 2.0 * np.pi * k / g.L
    basis = np.exp(1j * np.outer(x, kappa)) / np.sqrt(g.L)
    if derivative:
        basis = basis * (1j * kappa)
    return basis @ field.coeffs


class TestGrid:
    def test_rejects_non_power_of_two(self):
        with pytest.raises(ConfigurationError):
            Grid(d=1, L=TWO_PI, N=48)
        with pytest.raises(ConfigurationError):
            Grid(d=1, L=TWO_PI, N=4)

    def test_rejects_bad_dimension_and_length(self):
        with pytest.raises(ConfigurationError):
            Grid(d=3, L=TWO_PI, N=16)
        with pytest.raises(ConfigurationError):
            Grid(d=1, L=-1.0, N=16)

    def test_spacing_and_mode_count(self, grid64):
        assert grid64.h == pytest.approx(TWO_PI / 64)
        assert grid64.n_modes == 64
        g2 = Grid(d=2, L=1.0, N=16)
        assert g2.n_modes == 256
        assert g2.shape == (16, 16)

    def test_nyquist_mask(self, grid64):
        assert grid64.nyquist.sum() == 1
        assert grid64.k_int[0][grid64.nyquist][0] == -32


class TestTransforms:
    def test_zero_field_is_zero(self, grid64):
        v = to_physical(SpectralField.zeros(grid64))
        assert np.all(v == 0)

    def test_constant_mode_normalization(self, grid64):
        # only u_0 = c: physical field is the constant c / sqrt(2 pi)
        f = SpectralField.from_modes(grid64, {0: 2.0 + 1.0j})
        v = to_physical(f)
        assert np.allclose(v, (2.0 + 1.0j) / np.sqrt(TWO_PI), rtol=0, atol=1e-14)

    def test_constant_field_forward(self, grid64):
        c = 0.7 - 0.2j
        f = to_spectral(np.full(64, c), grid64)
        assert abs(f.coeffs[0] - c * np.sqrt(TWO_PI)) < 1e-12
        rest = np.abs(f.coeffs[1:])
        assert rest.max() < 1e-12

    def test_orthonormal_mode_forward(self, grid64):
        x = np.arange(64) * grid64.h
        e1 = np.exp(1j * x) / np.sqrt(TWO_PI)
        f = to_spectral(e1, grid64)
        expected = np.zeros(64, dtype=complex)
        expected[1] = 1.0
        assert np.max(np.abs(f.coeffs - expected)) < 1e-12

    def test_roundtrip_identity(self, grid64):
        rng = np.random.default_rng(7)
        for _ in range(20):
            f = random_field(grid64, rng)
            back = to_spectral(to_physical(f), grid64)
            err = np.max(np.abs(back.coeffs - f.coeffs)) / np.max(np.abs(f.coeffs))
            assert err < 1e-12

    def test_roundtrip_identity_2d(self):
        g = Grid(d=2, L=3.0, N=16)
        rng = np.random.default_rng(8)
        f = random_field(g, rng)
        back = to_spectral(to_physical(f), g)
        assert np.max(np.abs(back.coeffs - f.coeffs)) < 1e-12 * np.max(np.abs(f.coeffs))

    def test_parseval(self, grid64):
        rng = np.random.default_rng(9)
        for _ in range(200):
            f = random_field(grid64, rng)
            v = to_physical(f)
            quad = grid64.cell_volume * np.sum(np.abs(v) ** 2)
            assert abs(mass(f) - quad) <= 1e-12 * mass(f)

    def test_shape_mismatch_raises(self, grid64):
        with pytest.raises(ConfigurationError):
            to_spectral(np.zeros(32), grid64)
        with pytest.raises(ConfigurationError):
            SpectralField(grid64, np.zeros(32, dtype=complex))

    def test_nyquist_pinned_on_construction(self, grid64):
        c = np.ones(64, dtype=complex)
        f = SpectralField(grid64, c)
        assert f.coeffs[32] == 0.0  # k = -32 sits at index 32 in FFT layout


class TestMass:
    def test_constant_field(self, grid64):
        c = 1.5 - 0.5j
        f = to_spectral(np.full(64, c), grid64)
        assert mass(f) == pytest.approx(TWO_PI * abs(c) ** 2, rel=1e-13)

    def test_single_mode(self, grid64):
        f = SpectralField.from_modes(grid64, {3: 1.0})
        assert mass(f) == 1.0

    def test_matches_quadrature(self, grid64):
        rng = np.random.default_rng(10)
        for _ in range(50):
            f = random_field(grid64, rng)
            quad = grid64.cell_volume * np.sum(np.abs(to_physical(f)) ** 2)
            assert abs(mass(f) - quad) <= 1e-10 * mass(f)


class TestEnergy:
    def test_plane_wave(self, grid64):
        # u = c e^{ix}: H = pi |c|^2 - (pi/2) |c|^4 at sigma = 1
        c = 0.8 + 0.3j
        f = SpectralField.from_modes(grid64, {1: c * np.sqrt(TWO_PI)})
        expected = np.pi * abs(c) ** 2 - 0.5 * np.pi * abs(c) ** 4
        assert energy(f, 1.0) == pytest.approx(expected, rel=1e-12)

    def test_zero_field(self, grid64):
        assert energy(SpectralField.zeros(grid64), 1.0) == 0.0

    def test_against_mode_sum_oracle(self, grid64):
        rng = np.random.default_rng(11)
        for _ in range(10):
            f = random_field(grid64, rng)
            u = direct_eval(f)
            du = direct_eval(f, derivative=True)
            h = grid64.h
            oracle = 0.5 * h * np.sum(np.abs(du) ** 2) - 0.25 * h * np.sum(np.abs(u) ** 4)
            assert energy(f, 1.0) == pytest.approx(oracle, rel=1e-10, abs=1e-14)

    def test_kinetic_part_identity(self, grid64):
        rng = np.random.default_rng(12)
        f = random_field(grid64, rng)
        assert energy(f, 1.0, include_nonlinear=False) == 0.5 * (
            sobolev_norm_sq(f, 1.0) - mass(f)
        )


class TestSobolev:
    def test_r0_equals_mass_exactly(self, grid64):
        rng = np.random.default_rng(13)
        for _ in range(20):
            f = random_field(grid64, rng)
            assert sobolev_norm_sq(f, 0.0) == mass(f)

    def test_single_mode_r1(self, grid64):
        f = SpectralField.from_modes(grid64, {1: 1.0})
        assert sobolev_norm_sq(f, 1.0) == pytest.approx(2.0, rel=1e-14)

    def test_against_mass_plus_gradient(self, grid64):
        rng = np.random.default_rng(14)
        f = random_field(grid64, rng)
        du = direct_eval(f, derivative=True)
        oracle = mass(f) + grid64.h * np.sum(np.abs(du) ** 2)
        assert sobolev_norm_sq(f, 1.0) == pytest.approx(oracle, rel=1e-10)


class TestF1:
    def test_zero(self, grid64):
        assert f1(SpectralField.zeros(grid64), 1.0) == 0.0

    def test_constant_modulus(self, grid64):
        a = 0.6
        f = to_spectral(np.full(64, a + 0j), grid64)
        assert f1(f, 1.0) == pytest.approx(TWO_PI * a**4 / 4.0, rel=1e-12)

    def test_matches_quadrature(self, grid64):
        rng = np.random.default_rng(15)
        f = random_field(grid64, rng)
        v = to_physical(f)
        oracle = grid64.cell_volume * np.sum(np.abs(v) ** 4) / 4.0
        assert f1(f, 1.0) == pytest.approx(oracle, rel=1e-12)


class TestTailMass:
    def test_empty_tail(self, grid64):
        rng = np.random.default_rng(16)
        f = random_field(grid64, rng)
        assert tail_mass(f, 32, 1.0) == 0.0

    def test_cutoff_zero(self, grid64):
        rng = np.random.default_rng(17)
        f = random_field(grid64, rng)
        k0_term = (1.0 + 0.0) * abs(f.coeffs[0]) ** 2
        assert tail_mass(f, 0, 1.0) == pytest.approx(sobolev_norm_sq(f, 1.0) - k0_term, rel=1e-12)

    def test_single_mode_beyond_cutoff(self, grid64):
        f = SpectralField.from_modes(grid64, {5: 1.0})
        assert tail_mass(f, 3, 1.0) == pytest.approx(26.0, rel=1e-14)

    def test_monotone_in_cutoff(self, grid64):
        rng = np.random.default_rng(18)
        for _ in range(20):
            f = random_field(grid64, rng)
            tails = [tail_mass(f, c, 1.0) for c in range(33)]
            top = tails[0]
            for a, b in zip(tails, tails[1:]):
                assert b <= a + 1e-12 * top

    def test_cutoff_out_of_range(self, grid64):
        f = SpectralField.zeros(grid64)
        with pytest.raises(ConfigurationError):
            tail_mass(f, 33, 1.0)


def test_abs_power_integral_constant(grid64):
    f = to_spectral(np.full(64, 0.5 + 0j), grid64)
    assert abs_power_integral(f, 2.0) == pytest.approx(TWO_PI * 0.25, rel=1e-12)
