"""Empirical-measure machinery for invariant-measure estimation.

The long-time candidate invariant law is approximated by time averaging:
pooling an observable across all trajectories and all sample times in
[0, n] realizes, as an empirical measure, the time-averaged transition
probabilities mu_n = (1/n) int_0^n P_t(zero, .) dt pushed through that
observable.  Convergence is monitored with the 1-Wasserstein distance
between scalar empirical laws, which for sorted samples is the exact
quantile-function integral.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.stats import wasserstein_distance

from .ensemble import EnsembleRecord
from .errors import ConfigurationError
from .noise import NoiseStream

__all__ = [
    "EmpiricalMeasure",
    "kb_average",
    "wasserstein1",
    "stationarity_gap",
    "marginal_measure",
    "gap_resolution",
]

# stream indices at and above this value are reserved for resampling
# utilities so they can never collide with trajectory streams
RESAMPLING_STREAM_BASE = 2**63


@dataclass(frozen=True)
class EmpiricalMeasure:
    """Weighted samples of a scalar observable; weights sum to one."""

    values: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float).ravel()
        w = np.array(self.weights, dtype=float).ravel()
        if v.size == 0:
            raise ConfigurationError("empirical measure needs at least one sample")
        if w.shape != v.shape:
            raise ConfigurationError("values and weights must have the same length")
        if np.any(w <= 0) or not np.all(np.isfinite(w)):
            raise ConfigurationError("weights must be strictly positive and finite")
        if not np.all(np.isfinite(v)):
            raise ConfigurationError("sample values must be finite")
        w = w / w.sum()
        v.flags.writeable = False
        w.flags.writeable = False
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "weights", w)

    @classmethod
    def from_samples(cls, values, weights=None) -> "EmpiricalMeasure":
        values = np.asarray(values, dtype=float).ravel()
        if weights is None:
            weights = np.full(values.size, 1.0 / max(values.size, 1))
        return cls(values, weights)

    @classmethod
    def merge(cls, measures, weights) -> "EmpiricalMeasure":
        """Mixture of measures with the given nonnegative mixture weights."""
        measures = list(measures)
        weights = np.asarray(weights, dtype=float)
        if len(measures) != weights.size or len(measures) == 0:
            raise ConfigurationError("need one mixture weight per measure")
        vals = np.concatenate([m.values for m in measures])
        ws = np.concatenate([w * m.weights for m, w in zip(measures, weights)])
        return cls(vals, ws)

    def mean(self) -> float:
        return float(np.sum(self.values * self.weights))

    def moment(self, p: float) -> float:
        return float(np.sum(self.values**p * self.weights))

    def to_csv(self, path) -> Path:
        path = Path(path)
        with open(path, "w") as fh:
            fh.write("value,weight\n")
            for v, w in zip(self.values, self.weights):
                fh.write(f"{v:.17g},{w:.17g}\n")
        return path


def _window_rows(rec: EnsembleRecord, horizon: float) -> np.ndarray:
    t = rec.sample_times
    rows = np.nonzero(t <= horizon + 1e-9 * max(1.0, abs(horizon)))[0]
    if rows.size < 2:
        raise ConfigurationError("need at least two sample times in the averaging window")
    dts = np.diff(t[rows])
    if np.any(np.abs(dts - dts[0]) > 1e-9 * dts[0]):
        raise ConfigurationError("time averaging requires a uniform sampling schedule")
    return rows


def kb_average(rec: EnsembleRecord, name: str, horizon: float) -> EmpiricalMeasure:
    """Time-averaged empirical law of an observable over [0, horizon].

    Pools the observable across all valid trajectories and all sample times
    up to the horizon with equal weights (the Riemann-sum realization of the
    time integral in the averaged measure).
    """
    if name not in rec.series:
        raise ConfigurationError(f"unknown observable {name!r}")
    if horizon > rec.sample_times[-1] + 1e-9:
        raise ConfigurationError("horizon exceeds the recorded schedule")
    rows = _window_rows(rec, horizon)
    vals = rec.series[name][np.ix_(rows, np.nonzero(~rec.blown)[0])].ravel()
    return EmpiricalMeasure.from_samples(vals)


def wasserstein1(a: EmpiricalMeasure, b: EmpiricalMeasure) -> float:
    """1-Wasserstein distance between scalar empirical measures (exact)."""
    return float(
        wasserstein_distance(a.values, b.values, u_weights=a.weights, v_weights=b.weights)
    )


def marginal_measure(rec: EnsembleRecord, name: str, t: float) -> EmpiricalMeasure:
    """Cross-trajectory empirical marginal of an observable at one time."""
    if name not in rec.series:
        raise ConfigurationError(f"unknown observable {name!r}")
    vals = rec.series[name][rec.time_index(t)][~rec.blown]
    return EmpiricalMeasure.from_samples(vals)


def stationarity_gap(rec: EnsembleRecord, name: str, t1: float, t2: float) -> float:
    """W1 distance between the empirical marginals at two sample times."""
    return wasserstein1(marginal_measure(rec, name, t1), marginal_measure(rec, name, t2))


def gap_resolution(
    rec: EnsembleRecord,
    name: str,
    t1: float,
    t2: float,
    n_boot: int = 64,
    quantile: float = 0.95,
) -> float:
    """MC resolution of the stationarity gap: null-split bootstrap threshold.

    Pools both marginals, splits the pool at random into two halves of the
    original sizes, and returns the requested quantile of the W1 distances
    between the halves.  Gaps below roughly this value are indistinguishable
    from sampling noise.  Deterministic given the record's master seed.
    """
    a = marginal_measure(rec, name, t1).values
    b = marginal_measure(rec, name, t2).values
    pool = np.concatenate([a, b])
    gen = NoiseStream(rec.master_seed, RESAMPLING_STREAM_BASE).gen
    dists = np.empty(n_boot)
    for i in range(n_boot):
        perm = gen.permutation(pool.size)
        dists[i] = wasserstein_distance(pool[perm[: a.size]], pool[perm[a.size :]])
    return float(np.quantile(dists, quantile))
