"""Quantitative verification of the drift balance laws and long-time identities.

All checks work at the level of expectations: the Ito evolution of the mass
M = ||u||^2 and of the energy H reduces, after taking means, to drift
identities whose martingale parts are absorbed into the Monte Carlo standard
error.  With the diagonal circular noise model every correction term has a
closed form in the recorded scalar observables:

    sum_i Re(u, Phi e_i)^2            = 1/2 sum_k |phi_k|^2 |u_k|^2
    || |u|^sigma Phi ||_HS^2          = ||Phi||_HS^2 L^-d int |u|^(2 sigma)
    sum_i (|u|^(2s-2), Re(conj(u) Phi e_i)^2)
                                      = 1/2 ||Phi||_HS^2 L^-d int |u|^(2 sigma)

Each closed form is paired with a generic evaluator that sums literally over
the real noise directions {phi_k e_k/sqrt2, i phi_k e_k/sqrt2}; the two
routes must agree to near roundoff, which guards the derivation.

Time derivatives of ensemble means are centered finite differences on the
uniform sampling schedule; per-trajectory window means are used so the
telescoping of the martingale increments keeps standard errors small.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .ensemble import EnsembleRecord
from .errors import ConfigurationError
from .field import (
    SpectralField,
    abs_power_integral,
    mass,
    sobolev_norm_sq,
    to_physical,
)
from .integrator import SimConfig
from .noise import NoiseOperator, hs_norm_sq

__all__ = [
    "BalanceReport",
    "mass_balance_residual",
    "energy_balance_residual",
    "TransientCurve",
    "transient_mass_curve",
    "MomentCheck",
    "stationary_moment_check",
    "AldousCurve",
    "aldous_increment",
    "aldous_linear_prediction",
    "TailProfile",
    "tightness_tail_profile",
    "gn_ratio",
    "re_inner_sq_closed",
    "re_inner_sq_generic",
    "state_hs_norm_sq_closed",
    "state_hs_norm_sq_generic",
    "corr_term_closed",
    "corr_term_generic",
    "noise_direction_fields",
]

_MODULUS_CLAMP = 1e-8  # floor on |u| inside |u|^(2 sigma - 2) for sigma < 1


# ---------------------------------------------------------------------------
# closed-form vs generic Ito correction terms


def noise_direction_fields(phi: NoiseOperator):
    """The real orthonormal noise directions as spectral fields.

    Yields Phi applied to each basis direction: for every band mode k the
    pair phi_k e_k / sqrt2 and i phi_k e_k / sqrt2.
    """
    for i in phi.support:
        c = np.zeros(phi.grid.n_modes, dtype=np.complex128)
        c[i] = phi.phi[i] * math.sqrt(0.5)
        yield SpectralField(phi.grid, c)
        c = np.zeros(phi.grid.n_modes, dtype=np.complex128)
        c[i] = 1j * phi.phi[i] * math.sqrt(0.5)
        yield SpectralField(phi.grid, c)


def re_inner_sq_closed(u: SpectralField, phi: NoiseOperator) -> float:
    """sum_i Re(u, Phi e_i)^2 in closed form: 1/2 sum_k |phi_k u_k|^2."""
    s = phi.support
    return 0.5 * float(np.sum(np.abs(phi.phi[s]) ** 2 * np.abs(u.coeffs[s]) ** 2))


def re_inner_sq_generic(u: SpectralField, phi: NoiseOperator) -> float:
    """Same quantity by literal summation over the real noise directions."""
    total = 0.0
    for g in noise_direction_fields(phi):
        inner = np.vdot(g.coeffs, u.coeffs)  # (u, g) = sum u_k conj(g_k)
        total += float(inner.real) ** 2
    return total


def state_hs_norm_sq_closed(u: SpectralField, phi: NoiseOperator, sigma: float) -> float:
    """|| |u|^sigma Phi ||_HS^2 = ||Phi||_HS^2 L^-d int |u|^(2 sigma) dx."""
    g = phi.grid
    return hs_norm_sq(phi, "identity") * g.L**-g.d * abs_power_integral(u, 2.0 * sigma)


def state_hs_norm_sq_generic(u: SpectralField, phi: NoiseOperator, sigma: float) -> float:
    """Same HS norm by quadrature over every real noise direction."""
    g = phi.grid
    au = np.abs(to_physical(u)) ** (2.0 * sigma)
    total = 0.0
    for gd in noise_direction_fields(phi):
        gv = to_physical(gd)
        total += float(g.cell_volume * np.sum(au * (gv.real**2 + gv.imag**2)))
    return total


def _clamped_pow(au: np.ndarray, expo: float) -> np.ndarray:
    if expo >= 0:
        return au**expo
    return np.maximum(au, _MODULUS_CLAMP) ** expo


def corr_term_closed(u: SpectralField, phi: NoiseOperator, sigma: float) -> float:
    """sum_i (|u|^(2s-2), Re(conj(u) Phi e_i)^2) in closed form.

    The direction pair collapses pointwise to |u(x)|^2 |phi_k|^2 L^-d / 2, so
    the integrand is |u|^(2 sigma) and no modulus clamp is needed.
    """
    g = phi.grid
    return (
        0.5 * hs_norm_sq(phi, "identity") * g.L**-g.d * abs_power_integral(u, 2.0 * sigma)
    )


def corr_term_generic(u: SpectralField, phi: NoiseOperator, sigma: float) -> float:
    """Same correction by direction-wise quadrature (clamped for sigma < 1)."""
    g = phi.grid
    uv = to_physical(u)
    au = np.abs(uv)
    w = _clamped_pow(au, 2.0 * sigma - 2.0) if sigma != 1.0 else np.ones_like(au)
    total = 0.0
    for gd in noise_direction_fields(phi):
        gv = to_physical(gd)
        re = (np.conj(uv) * gv).real
        total += float(g.cell_volume * np.sum(w * re**2))
    return total


# ---------------------------------------------------------------------------
# window bookkeeping


def _window_rows(rec: EnsembleRecord, window) -> tuple[np.ndarray, float]:
    t0, t1 = float(window[0]), float(window[1])
    t = rec.sample_times
    rows = np.nonzero((t >= t0 - 1e-9) & (t <= t1 + 1e-9))[0]
    if rows.size < 3:
        raise ConfigurationError("window must contain at least three sample times")
    dts = np.diff(t[rows])
    if np.any(np.abs(dts - dts[0]) > 1e-9 * dts[0]):
        raise ConfigurationError("balance windows require a uniform sampling schedule")
    return rows, float(dts[0])


def _valid_series(rec: EnsembleRecord, name: str, rows: np.ndarray) -> np.ndarray:
    if name not in rec.series:
        raise ConfigurationError(f"observable {name!r} was not recorded")
    return rec.series[name][np.ix_(rows, np.nonzero(~rec.blown)[0])]


def _drift_per_traj(series: np.ndarray, lam: float, dt_s: float) -> np.ndarray:
    """Window mean of d/dt X + 2 lam X per trajectory (centered differences)."""
    ddt = (series[2:] - series[:-2]) / (2.0 * dt_s)
    return np.mean(ddt + 2.0 * lam * series[1:-1], axis=0)


@dataclass
class BalanceReport:
    """Drift-balance residual over a window, with per-term breakdown."""

    window: tuple[float, float]
    lhs: float
    rhs_terms: dict[str, float]
    residual: float
    residual_se: float
    dt_used: float
    n_valid: int

    @property
    def rhs(self) -> float:
        return sum(self.rhs_terms.values())

    def to_csv(self, path) -> Path:
        path = Path(path)
        with open(path, "w") as fh:
            fh.write("term,value\n")
            fh.write(f"lhs,{self.lhs:.17g}\n")
            for k, v in self.rhs_terms.items():
                fh.write(f"{k},{v:.17g}\n")
            fh.write(f"rhs,{self.rhs:.17g}\n")
            fh.write(f"residual,{self.residual:.17g}\n")
            fh.write(f"residual_se,{self.residual_se:.17g}\n")
            fh.write(f"window_start,{self.window[0]:.17g}\n")
            fh.write(f"window_end,{self.window[1]:.17g}\n")
            fh.write(f"dt_used,{self.dt_used:.17g}\n")
            fh.write(f"n_valid,{self.n_valid}\n")
        return path


def _se(per_traj: np.ndarray) -> float:
    n = per_traj.size
    if n < 2:
        return 0.0
    return float(np.std(per_traj, ddof=1) / math.sqrt(n))


def mass_balance_residual(
    rec: EnsembleRecord, cfg: SimConfig, phi: NoiseOperator, window
) -> BalanceReport:
    """Residual of d/dt E[M] + 2 lam E[M] = ||Phi||_HS^2 over the window.

    The martingale part of the mass evolution has zero mean and is absorbed
    into the reported standard error; the identity has no sigma dependence.
    """
    rows, dt_s = _window_rows(rec, window)
    m = _valid_series(rec, "mass", rows)
    hs_identity = hs_norm_sq(phi, "identity")
    drift = _drift_per_traj(m, cfg.lam, dt_s)
    per_traj = drift - hs_identity
    return BalanceReport(
        window=(float(window[0]), float(window[1])),
        lhs=float(np.mean(drift)),
        rhs_terms={"hs_identity": hs_identity},
        residual=float(np.mean(per_traj)),
        residual_se=_se(per_traj),
        dt_used=dt_s,
        n_valid=m.shape[1],
    )


def energy_balance_residual(
    rec: EnsembleRecord, cfg: SimConfig, phi: NoiseOperator, window
) -> BalanceReport:
    """Residual of the energy drift identity over the window.

    d/dt E[H] + 2 lam E[H] =
        lam sigma/(sigma+1) E[int |u|^(2s+2)]
        + ||grad Phi||_HS^2 / 2
        - E[|| |u|^sigma Phi ||_HS^2] / 2
        - sigma E[sum_i (|u|^(2s-2), Re(conj(u) Phi e_i)^2)],

    with the last two terms evaluated through their closed forms in the
    recorded observables (int |u|^(2 sigma) enters both).
    """
    rows, dt_s = _window_rows(rec, window)
    sig = cfg.sigma
    g = cfg.grid
    h = _valid_series(rec, "energy", rows)
    p22 = _valid_series(rec, "f1", rows) * (2.0 * sig + 2.0)  # int |u|^(2s+2)
    i2s = _valid_series(rec, "int_abs2sigma", rows)

    hs_grad = hs_norm_sq(phi, "gradient")
    a = hs_norm_sq(phi, "identity") * g.L**-g.d

    lhs_traj = _drift_per_traj(h, cfg.lam, dt_s)
    interior = slice(1, -1)
    nl_traj = cfg.lam * sig / (sig + 1.0) * np.mean(p22[interior], axis=0)
    state_hs_traj = 0.5 * a * np.mean(i2s[interior], axis=0)
    corr_traj = sig * 0.5 * a * np.mean(i2s[interior], axis=0)
    per_traj = lhs_traj - (nl_traj + 0.5 * hs_grad - state_hs_traj - corr_traj)

    rhs_terms = {
        "nonlinear_drift": float(np.mean(nl_traj)),
        "hs_gradient_half": 0.5 * hs_grad,
        "state_hs_half": -float(np.mean(state_hs_traj)),
        "re_projection": -float(np.mean(corr_traj)),
    }
    return BalanceReport(
        window=(float(window[0]), float(window[1])),
        lhs=float(np.mean(lhs_traj)),
        rhs_terms=rhs_terms,
        residual=float(np.mean(per_traj)),
        residual_se=_se(per_traj),
        dt_used=dt_s,
        n_valid=h.shape[1],
    )


# ---------------------------------------------------------------------------
# transient mass curve


@dataclass
class TransientCurve:
    times: np.ndarray
    predicted: np.ndarray
    estimated: np.ndarray
    std_error: np.ndarray
    n_valid: int

    def to_csv(self, path) -> Path:
        path = Path(path)
        with open(path, "w") as fh:
            fh.write("t,predicted,estimated,std_error,n_valid\n")
            for t, p, e, s in zip(self.times, self.predicted, self.estimated, self.std_error):
                fh.write(f"{t:.17g},{p:.17g},{e:.17g},{s:.17g},{self.n_valid}\n")
        return path


def transient_mass_curve(
    rec: EnsembleRecord, cfg: SimConfig, phi: NoiseOperator
) -> TransientCurve:
    """Expected mass against the exact relaxation law.

    predicted(t) = e^(-2 lam (t - t0)) E[M(t0)] + ||Phi||^2 (1 - e^(-2 lam (t-t0))) / (2 lam)
    anchored at the first sample time t0.  The law holds for every sigma.
    """
    t = rec.sample_times
    m = rec.series["mass"][:, ~rec.blown]
    n = m.shape[1]
    est = np.mean(m, axis=1)
    se = np.std(m, axis=1, ddof=1) / math.sqrt(n) if n > 1 else np.zeros_like(est)
    hs = hs_norm_sq(phi, "identity")
    decay = np.exp(-2.0 * cfg.lam * (t - t[0]))
    pred = decay * est[0] + hs * (1.0 - decay) / (2.0 * cfg.lam)
    return TransientCurve(times=t, predicted=pred, estimated=est, std_error=se, n_valid=n)


# ---------------------------------------------------------------------------
# stationary moment recursion


@dataclass
class MomentCheck:
    """One level of the stationary mass-moment recursion.

    lhs = 2 lam E[M^(k+1)]; rhs = ||Phi||^2 E[M^k] + 2 k E[M^(k-1) C] with
    C = sum_i Re(u, Phi e_i)^2.  ``bound`` is the coarse a-priori bound
    (||Phi||^2 + k/2) E[M^k].
    """

    k: int
    lhs: float
    rhs: float
    diff_se: float
    bound: float
    lhs_rel_se: float

    @property
    def equality_pass(self) -> bool:
        return abs(self.lhs - self.rhs) <= 3.0 * self.diff_se

    @property
    def bound_pass(self) -> bool:
        return self.lhs <= self.bound * (1.0 + 3.0 * self.lhs_rel_se)

    @property
    def passed(self) -> bool:
        return self.equality_pass and self.bound_pass


def _mode_name_of(grid, flat_idx: int) -> str:
    ks = [int(axis[flat_idx]) for axis in grid.k_int]
    return "mode_" + "_".join(str(k) for k in ks)


def re_inner_sq_series(rec: EnsembleRecord, phi: NoiseOperator, rows: np.ndarray) -> np.ndarray:
    """Series of C = sum_i Re(u, Phi e_i)^2 from the recorded mode powers."""
    g = phi.grid
    total = None
    for i in phi.support:
        name = _mode_name_of(g, int(i))
        if name not in rec.series:
            raise ConfigurationError(
                "per-mode recording must cover the noise band (raise k_report)"
            )
        term = 0.5 * abs(phi.phi[i]) ** 2 * _valid_series(rec, name, rows)
        total = term if total is None else total + term
    if total is None:
        total = np.zeros_like(_valid_series(rec, "mass", rows))
    return total


def stationary_moment_check(
    rec: EnsembleRecord, phi: NoiseOperator, lam: float, k: int, window
) -> MomentCheck:
    """Check 2 lam E[M^(k+1)] = ||Phi||^2 E[M^k] + 2 k E[M^(k-1) C] over a
    stationary window, plus the coarse bound lhs <= (||Phi||^2 + k/2) E[M^k].
    """
    if k < 1:
        raise ConfigurationError("moment order k must be at least 1")
    rows, _ = _window_rows(rec, window)
    m = _valid_series(rec, "mass", rows)
    c = re_inner_sq_series(rec, phi, rows)
    hs = hs_norm_sq(phi, "identity")

    lhs_traj = 2.0 * lam * np.mean(m ** (k + 1), axis=0)
    rhs_traj = hs * np.mean(m**k, axis=0) + 2.0 * k * np.mean(m ** (k - 1) * c, axis=0)
    diff = lhs_traj - rhs_traj

    lhs = float(np.mean(lhs_traj))
    mk = float(np.mean(m**k))
    lhs_se = _se(lhs_traj)
    return MomentCheck(
        k=k,
        lhs=lhs,
        rhs=float(np.mean(rhs_traj)),
        diff_se=_se(diff),
        bound=(hs + 0.5 * k) * mk,
        lhs_rel_se=lhs_se / abs(lhs) if lhs != 0.0 else 0.0,
    )


# ---------------------------------------------------------------------------
# Aldous increment diagnostic


@dataclass
class AldousCurve:
    deltas: np.ndarray
    means: np.ndarray
    std_errors: np.ndarray
    n_valid: int

    def to_csv(self, path) -> Path:
        path = Path(path)
        with open(path, "w") as fh:
            fh.write("delta,mean,std_error,n_valid\n")
            for d, m, s in zip(self.deltas, self.means, self.std_errors):
                fh.write(f"{d:.17g},{m:.17g},{s:.17g},{self.n_valid}\n")
        return path

    def halving_decreases(self) -> bool:
        """phi(delta/2) < phi(delta) + 3 SE for each recorded halving."""
        ok = True
        for i, d in enumerate(self.deltas):
            target = 2.0 * d
            j = np.nonzero(np.abs(self.deltas - target) <= 1e-9 * max(target, 1.0))[0]
            if j.size == 1:
                jj = int(j[0])
                se = math.hypot(self.std_errors[i], self.std_errors[jj])
                ok = ok and (self.means[i] < self.means[jj] + 3.0 * se)
        return ok


def aldous_increment(rec: EnsembleRecord) -> AldousCurve:
    """Mean squared L^2 increment E||u(T+delta) - u(T)||^2 per lag delta.

    Averages over all recorded anchors T and all valid trajectories;
    standard errors come from the cross-trajectory spread of per-trajectory
    anchor means.
    """
    if not rec.increments:
        raise ConfigurationError("the record holds no paired-snapshot increments")
    valid = ~rec.blown
    by_delta: dict[float, list[np.ndarray]] = {}
    for (_, d), arr in rec.increments.items():
        by_delta.setdefault(round(d, 12), []).append(arr[valid])
    deltas = np.array(sorted(by_delta))
    means = np.empty_like(deltas)
    ses = np.empty_like(deltas)
    for i, d in enumerate(deltas):
        per_traj = np.mean(np.stack(by_delta[d]), axis=0)
        means[i] = np.mean(per_traj)
        ses[i] = _se(per_traj)
    return AldousCurve(deltas=deltas, means=means, std_errors=ses, n_valid=int(valid.sum()))


def aldous_linear_prediction(
    phi: NoiseOperator, lam: float, delta, include_sigma0_phase: bool = True
) -> np.ndarray:
    """Closed-form stationary increment variance of the sigma = 0 dynamics.

    Per mode, u_k is a complex OU process with damping lam, oscillation
    frequency kappa_k^2 (minus the global unit rotation contributed by the
    sigma = 0 phase substep, unless disabled) and stationary variance
    s_k = |phi_k|^2 / (2 lam):

        E|u_k(T+d) - u_k(T)|^2 = 2 s_k (1 - e^(-lam d) cos(omega_k d)).
    """
    delta = np.atleast_1d(np.asarray(delta, dtype=float))
    g = phi.grid
    s = np.abs(phi.phi[phi.support]) ** 2 / (2.0 * lam)
    omega = g.kappa_sq[phi.support] - (1.0 if include_sigma0_phase else 0.0)
    out = np.empty(delta.size)
    for i, d in enumerate(delta):
        out[i] = float(np.sum(2.0 * s * (1.0 - np.exp(-lam * d) * np.cos(omega * d))))
    return out


# ---------------------------------------------------------------------------
# spectral tail tightness


@dataclass
class TailProfile:
    cutoffs: np.ndarray
    sup_mean: np.ndarray  # sup over sample times of the ensemble mean
    sup_time: np.ndarray
    n_valid: int

    @property
    def nonincreasing(self) -> bool:
        tol = 1e-12 * max(float(self.sup_mean[0]), 1e-300)
        return bool(np.all(np.diff(self.sup_mean) <= tol))

    def to_csv(self, path) -> Path:
        path = Path(path)
        with open(path, "w") as fh:
            fh.write("cutoff,sup_mean_tail,at_time,n_valid\n")
            for c, v, t in zip(self.cutoffs, self.sup_mean, self.sup_time):
                fh.write(f"{int(c)},{v:.17g},{t:.17g},{self.n_valid}\n")
        return path


def tightness_tail_profile(rec: EnsembleRecord, cutoffs) -> TailProfile:
    """sup over sampled times of the mean H^1 tail mass, per cutoff."""
    cutoffs = sorted(int(c) for c in cutoffs)
    sup_mean = np.empty(len(cutoffs))
    sup_time = np.empty(len(cutoffs))
    valid = ~rec.blown
    for i, c in enumerate(cutoffs):
        name = f"tail_{c}"
        if name not in rec.series:
            raise ConfigurationError(f"tail cutoff {c} was not recorded")
        means = np.mean(rec.series[name][:, valid], axis=1)
        j = int(np.argmax(means))
        sup_mean[i] = means[j]
        sup_time[i] = rec.sample_times[j]
    return TailProfile(
        cutoffs=np.array(cutoffs),
        sup_mean=sup_mean,
        sup_time=sup_time,
        n_valid=int(valid.sum()),
    )


# ---------------------------------------------------------------------------
# interpolation-ratio observable


def gn_ratio(f: SpectralField, sigma: float) -> float:
    """Interpolation ratio ||v||_{L^(2s+2)}^(2s+2) / (||v||_H1^(d s) ||v||_L2^(s(2-d)+2)).

    Scale-invariant observable; no constant is asserted.  NaN for the zero
    field (the ratio is undefined there).
    """
    m = mass(f)
    if m == 0.0:
        return float("nan")
    d = f.grid.d
    num = abs_power_integral(f, 2.0 * sigma + 2.0)
    den = sobolev_norm_sq(f, 1.0) ** (d * sigma / 2.0) * m ** ((sigma * (2.0 - d) + 2.0) / 2.0)
    return num / den
