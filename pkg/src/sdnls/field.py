"""Spectral fields on a periodic torus and scalar functionals of the state.

The state is a complex field u on [0, L)^d expanded in the orthonormal
Fourier basis

    e_k(x) = L^{-d/2} exp(i kappa_k . x),    kappa_k = 2 pi k / L,

with integer modes k in {-N/2, ..., N/2-1}^d stored in FFT layout.  Under
this normalization Parseval is exact: ||u||_{L^2}^2 = sum_k |u_k|^2.  The
Nyquist row (any component k_i = -N/2) is pinned to zero so the retained
mode set is closed under negation.

Physical-space integrals (the |u|^p terms in the energy and related
functionals) are collocation sums h^d sum_j |u(x_j)|^p on the N^d grid.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError

__all__ = [
    "Grid",
    "SpectralField",
    "to_physical",
    "to_spectral",
    "mass",
    "energy",
    "sobolev_norm_sq",
    "f1",
    "tail_mass",
    "abs_power_integral",
]


def _is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class Grid:
    """Periodic grid: d dimensions, side length L, N points per dimension.

    Derived arrays are flat over the N^d modes in FFT layout:
    ``k_int`` integer wavenumbers per axis, ``k_inf`` the sup-norm |k|_inf,
    ``kappa_sq`` the squared angular wavenumber |2 pi k / L|^2, and
    ``nyquist`` the mask of pinned modes.
    """

    d: int
    L: float
    N: int
    k_int: tuple[np.ndarray, ...] = field(init=False, repr=False, compare=False)
    k_inf: np.ndarray = field(init=False, repr=False, compare=False)
    kappa_sq: np.ndarray = field(init=False, repr=False, compare=False)
    nyquist: np.ndarray = field(init=False, repr=False, compare=False)
    nyquist_idx: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.d not in (1, 2):
            raise ConfigurationError(f"dimension must be 1 or 2, got {self.d}")
        if not (self.L > 0):
            raise ConfigurationError(f"torus length must be positive, got {self.L}")
        if not _is_pow2(self.N) or self.N < 8:
            raise ConfigurationError(f"N must be a power of two >= 8, got {self.N}")
        axis = (np.fft.fftfreq(self.N) * self.N).astype(np.int64)
        axes = np.meshgrid(*([axis] * self.d), indexing="ij")
        k_int = tuple(a.ravel() for a in axes)
        k_inf = np.max(np.abs(np.stack(k_int)), axis=0)
        kappa_sq = sum((2.0 * np.pi / self.L * k) ** 2 for k in k_int)
        nyquist = np.any(np.stack(k_int) == -(self.N // 2), axis=0)
        nyquist_idx = np.nonzero(nyquist)[0]
        for name, arr in (
            ("k_int", k_int),
            ("k_inf", k_inf),
            ("kappa_sq", kappa_sq),
            ("nyquist", nyquist),
            ("nyquist_idx", nyquist_idx),
        ):
            if isinstance(arr, tuple):
                for a in arr:
                    a.flags.writeable = False
            else:
                arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.N,) * self.d

    @property
    def n_modes(self) -> int:
        return self.N**self.d

    @property
    def h(self) -> float:
        """Physical grid spacing L/N."""
        return self.L / self.N

    @property
    def cell_volume(self) -> float:
        return self.h**self.d

    def index_of(self, k) -> int:
        """Flat FFT-layout index of the integer mode k (int or d-tuple)."""
        ks = (k,) if self.d == 1 else tuple(k)
        if len(ks) != self.d:
            raise ConfigurationError(f"mode {k!r} has wrong dimension for d={self.d}")
        flat = 0
        for ki in ks:
            ki = int(ki)
            if not (-self.N // 2 <= ki <= self.N // 2 - 1):
                raise ConfigurationError(f"mode {k!r} outside {{-N/2,...,N/2-1}}")
            flat = flat * self.N + (ki % self.N)
        return flat


@dataclass(frozen=True)
class SpectralField:
    """Immutable field snapshot: grid plus one complex coefficient per mode.

    Coefficients are stored flat in FFT layout; Nyquist modes are zeroed on
    construction.
    """

    grid: Grid
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=np.complex128)
        if c.shape == self.grid.shape:
            c = c.ravel()
        if c.shape != (self.grid.n_modes,):
            raise ConfigurationError(
                f"coefficient shape {np.shape(self.coeffs)} does not match grid {self.grid.shape}"
            )
        c = c.copy()
        c[self.grid.nyquist] = 0.0
        c.flags.writeable = False
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def zeros(cls, grid: Grid) -> "SpectralField":
        return cls(grid, np.zeros(grid.n_modes, dtype=np.complex128))

    @classmethod
    def from_modes(cls, grid: Grid, amplitudes: dict) -> "SpectralField":
        """Field with the given {mode: amplitude} entries, zero elsewhere."""
        c = np.zeros(grid.n_modes, dtype=np.complex128)
        for k, a in amplitudes.items():
            c[grid.index_of(k)] = a
        return cls(grid, c)

    def with_coeffs(self, coeffs: np.ndarray) -> "SpectralField":
        return SpectralField(self.grid, coeffs)


def to_physical(f: SpectralField) -> np.ndarray:
    """Evaluate the field at the grid points x_j = j h (inverse transform)."""
    g = f.grid
    c = f.coeffs.reshape(g.shape)
    return np.fft.ifftn(c) * (g.N**g.d / g.L ** (g.d / 2.0))


def to_spectral(values: np.ndarray, grid: Grid) -> SpectralField:
    """Coefficients of a field sampled at the grid points (forward transform)."""
    v = np.asarray(values, dtype=np.complex128)
    if v.shape != grid.shape:
        raise ConfigurationError(
            f"physical array shape {v.shape} does not match grid {grid.shape}"
        )
    c = np.fft.fftn(v) * (grid.L ** (grid.d / 2.0) / grid.N**grid.d)
    return SpectralField(grid, c.ravel())


def _weighted_mode_sum(f: SpectralField, weights) -> float:
    """sum_k w_k |u_k|^2 with a single, fixed summation order."""
    abs2 = f.coeffs.real**2 + f.coeffs.imag**2
    return float(np.sum(weights * abs2))


def mass(f: SpectralField) -> float:
    """L^2 mass sum_k |u_k|^2 (equals the grid quadrature of |u|^2)."""
    return _weighted_mode_sum(f, 1.0)


def sobolev_norm_sq(f: SpectralField, r: float) -> float:
    """Squared H^r norm sum_k (1 + kappa_k^2)^r |u_k|^2."""
    return _weighted_mode_sum(f, (1.0 + f.grid.kappa_sq) ** r)


def abs_power_integral(f: SpectralField, p: float) -> float:
    """Collocation quadrature of int |u(x)|^p dx on the grid."""
    v = to_physical(f)
    return float(f.grid.cell_volume * np.sum(np.abs(v) ** p))


def energy(f: SpectralField, sigma: float, include_nonlinear: bool = True) -> float:
    """Energy 1/2 int |grad u|^2 - 1/(2 sigma + 2) int |u|^(2 sigma + 2).

    The gradient term is computed as (sobolev_norm_sq(f,1) - mass(f)) / 2 so
    that disabling the nonlinear part reproduces that expression exactly.
    """
    kinetic = 0.5 * (sobolev_norm_sq(f, 1.0) - mass(f))
    if not include_nonlinear:
        return kinetic
    return kinetic - abs_power_integral(f, 2.0 * sigma + 2.0) / (2.0 * sigma + 2.0)


def f1(f: SpectralField, sigma: float) -> float:
    """Potential functional 1/(2 sigma + 2) int |u|^(2 sigma + 2) dx."""
    return abs_power_integral(f, 2.0 * sigma + 2.0) / (2.0 * sigma + 2.0)


def tail_mass(f: SpectralField, cutoff: int, r: float = 1.0) -> float:
    """High-frequency H^r mass sum over |k|_inf > cutoff of (1+kappa^2)^r |u_k|^2."""
    g = f.grid
    if not (0 <= cutoff <= g.N // 2):
        raise ConfigurationError(f"cutoff must lie in [0, N/2], got {cutoff}")
    w = np.where(g.k_inf > cutoff, (1.0 + g.kappa_sq) ** r, 0.0)
    return _weighted_mode_sum(f, w)
