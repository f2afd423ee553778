"""Additive noise model: diagonal-in-Fourier operator and splittable streams.

The forcing is Phi dW with Phi diagonal in the Fourier basis: mode k is
driven by phi_k (dB^1_k + i dB^2_k)/sqrt(2) with independent real Brownian
motions, i.e. circularly symmetric complex noise.  Written in the real
orthonormal directions {phi_k e_k / sqrt2, i phi_k e_k / sqrt2} this is a
Hilbert-Schmidt operator with

    ||Phi||_HS(L2,L2)^2     = sum_k |phi_k|^2
    ||grad Phi||_HS^2       = sum_k kappa_k^2 |phi_k|^2
    ||Phi||_HS(L2,H1)^2     = sum_k (1 + kappa_k^2) |phi_k|^2.

Amplitudes vanish outside a band |k|_inf <= k_max, so every norm above is a
finite sum.  Streams are counter-based (Philox) and keyed by
(master_seed, trajectory_index): the draw sequence of a trajectory is a pure
function of that pair, independent of scheduling or batch layout.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError
from .field import Grid, SpectralField

__all__ = [
    "NoiseOperator",
    "NoiseStream",
    "hs_norm_sq",
    "sample_increment",
    "sample_ou_kick",
    "ou_kick_scale",
]

_SQRT_HALF = np.sqrt(0.5)


@dataclass(frozen=True)
class NoiseOperator:
    """Per-mode complex amplitudes phi_k, zero outside a fixed band.

    ``support`` lists the flat indices of the band in a canonical order
    (lexicographic in the integer mode tuple); draws are always consumed in
    this order, which makes noise sequences independent of amplitude values.
    """

    grid: Grid
    phi: np.ndarray
    support: np.ndarray

    def __post_init__(self):
        phi = np.asarray(self.phi, dtype=np.complex128).ravel()
        if phi.shape != (self.grid.n_modes,):
            raise ConfigurationError("phi shape does not match grid")
        if not np.all(np.isfinite(phi.view(np.float64))):
            raise ConfigurationError("phi has non-finite entries")
        phi = phi.copy()
        phi[self.grid.nyquist] = 0.0
        support = np.asarray(self.support, dtype=np.int64)
        outside = np.setdiff1d(np.nonzero(phi)[0], support)
        if outside.size:
            raise ConfigurationError("phi is nonzero outside the declared band")
        phi.flags.writeable = False
        support.flags.writeable = False
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "support", support)

    @staticmethod
    def _band_support(grid: Grid, k_max: int) -> np.ndarray:
        if not (0 <= k_max <= grid.N // 2 - 1):
            raise ConfigurationError(
                f"k_max must lie in [0, N/2-1] to avoid the Nyquist row, got {k_max}"
            )
        if grid.d == 1:
            modes = [(k,) for k in range(-k_max, k_max + 1)]
        else:
            modes = [
                (kx, ky)
                for kx in range(-k_max, k_max + 1)
                for ky in range(-k_max, k_max + 1)
            ]
        return np.array([grid.index_of(m if grid.d > 1 else m[0]) for m in modes], dtype=np.int64)

    @classmethod
    def band(cls, grid: Grid, amplitude: float, k_max: int, decay_power: float) -> "NoiseOperator":
        """Real band profile phi_k = amplitude / (1 + kappa_k^2)^(decay_power/2)."""
        support = cls._band_support(grid, k_max)
        phi = np.zeros(grid.n_modes, dtype=np.complex128)
        phi[support] = amplitude / (1.0 + grid.kappa_sq[support]) ** (decay_power / 2.0)
        return cls(grid, phi, support)

    @classmethod
    def from_modes(cls, grid: Grid, entries) -> "NoiseOperator":
        """Explicit profile from (k, Re phi_k, Im phi_k) triples."""
        phi = np.zeros(grid.n_modes, dtype=np.complex128)
        idx = []
        for k, re, im in entries:
            i = grid.index_of(k)
            if i in idx:
                raise ConfigurationError(f"duplicate mode {k!r} in noise profile")
            idx.append(i)
            phi[i] = complex(float(re), float(im))
        order = np.argsort(np.array(idx, dtype=np.int64), kind="stable")
        support = np.array(idx, dtype=np.int64)[order]
        return cls(grid, phi, support)

    @classmethod
    def zero(cls, grid: Grid) -> "NoiseOperator":
        """Degenerate operator phi = 0 (deterministic dynamics)."""
        return cls(grid, np.zeros(grid.n_modes, dtype=np.complex128), np.array([], dtype=np.int64))


def hs_norm_sq(phi: NoiseOperator, weight: str = "identity") -> float:
    """Squared Hilbert-Schmidt norm with mode weight identity/gradient/h1.

    The h1 value is formed as identity + gradient so the Pythagorean split
    holds exactly in floating point.
    """
    abs2 = phi.phi.real**2 + phi.phi.imag**2
    if weight == "identity":
        return float(np.sum(1.0 * abs2))
    if weight == "gradient":
        return float(np.sum(phi.grid.kappa_sq * abs2))
    if weight == "h1":
        return hs_norm_sq(phi, "identity") + hs_norm_sq(phi, "gradient")
    raise ConfigurationError(f"unknown HS weight {weight!r}")


@dataclass
class NoiseStream:
    """Deterministic per-trajectory stream of circular complex Gaussians.

    Counter-based: recreating a stream with the same (master_seed,
    trajectory_index) replays the identical sequence, and block draws are
    bit-identical to the same draws made one increment at a time.
    """

    master_seed: int
    trajectory_index: int
    gen: np.random.Generator = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not (0 <= self.master_seed < 2**64):
            raise ConfigurationError("master_seed must be a 64-bit unsigned integer")
        if not (0 <= self.trajectory_index < 2**64):
            raise ConfigurationError("trajectory_index must be a 64-bit unsigned integer")
        self.gen = np.random.Generator(
            np.random.Philox(key=[self.master_seed, self.trajectory_index])
        )

    def draw_circular(self, n_modes: int) -> np.ndarray:
        """One increment: n_modes samples of (xi1 + i xi2)/sqrt(2)."""
        z = self.gen.standard_normal((n_modes, 2))
        return (z[:, 0] + 1j * z[:, 1]) * _SQRT_HALF

    def draw_circular_block(self, n_steps: int, n_modes: int) -> np.ndarray:
        """n_steps consecutive increments at once, shape (n_steps, n_modes)."""
        z = self.gen.standard_normal((n_steps, n_modes, 2))
        return (z[..., 0] + 1j * z[..., 1]) * _SQRT_HALF


def sample_increment(stream: NoiseStream, phi: NoiseOperator, dt: float) -> SpectralField:
    """Wiener increment Phi (W_{t+dt} - W_t): per-mode variance |phi_k|^2 dt."""
    if not (dt > 0):
        raise ConfigurationError(f"dt must be positive, got {dt}")
    z = stream.draw_circular(phi.support.size)
    c = np.zeros(phi.grid.n_modes, dtype=np.complex128)
    c[phi.support] = phi.phi[phi.support] * z * np.sqrt(dt)
    return SpectralField(phi.grid, c)


def ou_kick_scale(lam: float, dt: float) -> float:
    """Standard-deviation factor sqrt((1 - e^(-2 lam dt)) / (2 lam)).

    This is the exact variance of int_0^dt e^((-lam + i kappa^2)(dt-s)) dB_s
    divided by |phi_k|^2; the oscillatory phase has unit modulus, so only the
    damping enters.
    """
    if not (lam > 0 and dt > 0):
        raise ConfigurationError("lam and dt must be positive")
    return float(np.sqrt(-np.expm1(-2.0 * lam * dt) / (2.0 * lam)))


def sample_ou_kick(
    stream: NoiseStream, phi: NoiseOperator, lam: float, dt: float
) -> SpectralField:
    """Exact stochastic convolution over one step of the damped linear flow.

    Per-mode complex Gaussian with variance |phi_k|^2 (1 - e^(-2 lam dt)) / (2 lam).
    """
    z = stream.draw_circular(phi.support.size)
    c = np.zeros(phi.grid.n_modes, dtype=np.complex128)
    c[phi.support] = phi.phi[phi.support] * z * ou_kick_scale(lam, dt)
    return SpectralField(phi.grid, c)
