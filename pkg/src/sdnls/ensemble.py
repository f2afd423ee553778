"""Monte Carlo ensemble driver.

Runs independent trajectories of the split-step integrator from a configured
initial law, records scalar observables on a sampling schedule, and
aggregates moments with standard errors.

Reproducibility contract: trajectory i draws all of its randomness from the
stream keyed (master_seed, i), and trajectories are processed in fixed-size
blocks whose composition depends only on (n_traj, block_size).  Results are
therefore bit-identical for any worker count; the worker pool only decides
which process executes which block.

Recorded observables (per trajectory, per sample time):

* ``mass``            sum_k |u_k|^2
* ``energy``          the damped-NLS energy at the configured sigma
* ``f1``              1/(2 sigma + 2) int |u|^(2 sigma + 2)
* ``h1``              squared H^1 norm
* ``int_abs2sigma``   int |u|^(2 sigma) dx (enters the noise correction terms)
* ``mode_<k>``        |u_k|^2 for |k|_inf <= k_report
* ``tail_<c>``        H^1 tail mass beyond cutoff c

Optionally the driver records paired-snapshot increments
||u(T + delta) - u(T)||_{L^2}^2 for configured anchors T and lags delta.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigurationError
from .field import Grid, SpectralField
from .integrator import SimConfig, apply_nonlinear_batch, linear_decay_factors
from .noise import NoiseOperator, NoiseStream, ou_kick_scale

__all__ = [
    "InitialLaw",
    "EnsembleRecord",
    "run_ensemble",
    "estimate_observable",
    "mode_names",
    "write_record_csv",
]

_CHUNK_STEPS = 512  # noise pre-generation window; internal, fixed
_TIME_TOL = 1e-9


@dataclass(frozen=True)
class InitialLaw:
    """Initial condition family: zero, a fixed field, or banded Gaussian modes.

    All three produce samples with finite H^1 moments of every order by
    construction (deterministic fields or band-limited Gaussians).
    """

    kind: str
    field0: SpectralField | None = None
    profile: NoiseOperator | None = None

    @classmethod
    def zero(cls) -> "InitialLaw":
        return cls("zero")

    @classmethod
    def fixed(cls, field0: SpectralField) -> "InitialLaw":
        return cls("fixed", field0=field0)

    @classmethod
    def gaussian_modes(cls, profile: NoiseOperator) -> "InitialLaw":
        """Independent circular Gaussian modes with E|u_k(0)|^2 = |scale_k|^2."""
        return cls("gaussian_modes", profile=profile)

    def sample_coeffs(self, stream: NoiseStream, grid: Grid) -> np.ndarray:
        if self.kind == "zero":
            return np.zeros(grid.n_modes, dtype=np.complex128)
        if self.kind == "fixed":
            if self.field0 is None or self.field0.grid != grid:
                raise ConfigurationError("fixed initial law does not match the grid")
            return self.field0.coeffs.copy()
        if self.kind == "gaussian_modes":
            p = self.profile
            if p is None or p.grid != grid:
                raise ConfigurationError("gaussian_modes profile does not match the grid")
            c = np.zeros(grid.n_modes, dtype=np.complex128)
            c[p.support] = p.phi[p.support] * stream.draw_circular(p.support.size)
            return c
        raise ConfigurationError(f"unknown initial law kind {self.kind!r}")


@dataclass
class EnsembleRecord:
    """Per-trajectory observable series on a shared sampling schedule."""

    sample_times: np.ndarray
    series: dict[str, np.ndarray]  # name -> (n_times, n_traj)
    increments: dict[tuple[float, float], np.ndarray]  # (anchor_t, delta) -> (n_traj,)
    blown: np.ndarray  # (n_traj,) bool
    blow_times: np.ndarray  # (n_traj,) float, nan where not blown
    master_seed: int
    n_traj: int

    @property
    def n_valid(self) -> int:
        return int(np.sum(~self.blown))

    def observables(self) -> list[str]:
        return list(self.series)

    def time_index(self, t: float) -> int:
        hits = np.nonzero(np.abs(self.sample_times - t) <= _TIME_TOL * max(1.0, abs(t)))[0]
        if hits.size != 1:
            raise ConfigurationError(f"time {t} is not on the sampling schedule")
        return int(hits[0])


def mode_names(grid: Grid, k_report: int) -> list[tuple[str, int]]:
    """(name, flat index) pairs for reported modes |k|_inf <= k_report."""
    if k_report < 0 or k_report > grid.N // 2 - 1:
        raise ConfigurationError("k_report must lie in [0, N/2-1]")
    out = []
    if grid.d == 1:
        for k in range(-k_report, k_report + 1):
            out.append((f"mode_{k}", grid.index_of(k)))
    else:
        for kx in range(-k_report, k_report + 1):
            for ky in range(-k_report, k_report + 1):
                out.append((f"mode_{kx}_{ky}", grid.index_of((kx, ky))))
    return out


def _steps_of(times: np.ndarray, dt: float, what: str) -> np.ndarray:
    """Map times to integer step indices, requiring alignment with dt."""
    times = np.asarray(times, dtype=float)
    steps = np.round(times / dt).astype(np.int64)
    if steps.size and np.any(np.abs(steps * dt - times) > _TIME_TOL * np.maximum(1.0, np.abs(times))):
        raise ConfigurationError(f"{what} must be multiples of dt={dt}")
    if steps.size and np.any(steps < 0):
        raise ConfigurationError(f"{what} must be nonnegative")
    return steps


@dataclass(frozen=True)
class _BlockSpec:
    cfg: SimConfig
    phi: NoiseOperator
    law: InitialLaw
    master_seed: int
    sample_steps: np.ndarray
    k_report: int
    tail_cutoffs: tuple[int, ...]
    aldous_pairs: tuple[tuple[int, int], ...]  # (anchor_step, lag_step)
    n_steps: int


def _run_block(spec: _BlockSpec, start: int, stop: int):
    cfg, phi, grid = spec.cfg, spec.phi, spec.cfg.grid
    B = stop - start
    dt = cfg.dt
    streams = [NoiseStream(spec.master_seed, i) for i in range(start, stop)]
    state = np.stack([spec.law.sample_coeffs(s, grid) for s in streams])
    state[:, grid.nyquist_idx] = 0.0

    decay = linear_decay_factors(grid, cfg.lam, dt)
    support = phi.support
    kick_vec = phi.phi[support] * ou_kick_scale(cfg.lam, dt) if support.size else None

    w_h1 = 1.0 + grid.kappa_sq
    mode_list = mode_names(grid, spec.k_report)
    tail_w = [np.where(grid.k_inf > c, w_h1, 0.0) for c in spec.tail_cutoffs]

    names = (
        ["mass", "energy", "f1", "h1", "int_abs2sigma"]
        + [n for n, _ in mode_list]
        + [f"tail_{c}" for c in spec.tail_cutoffs]
    )
    out = {n: np.empty((spec.sample_steps.size, B)) for n in names}
    sample_row = {int(s): r for r, s in enumerate(spec.sample_steps)}

    anchor_set = {a for a, _ in spec.aldous_pairs}
    consume_at: dict[int, list[tuple[int, int]]] = {}
    for a, d in spec.aldous_pairs:
        consume_at.setdefault(a + d, []).append((a, d))
    last_use = {a: max(a + d for aa, d in spec.aldous_pairs if aa == a) for a in anchor_set}
    snapshots: dict[int, np.ndarray] = {}
    incs = {(a, d): np.empty(B) for a, d in spec.aldous_pairs}

    blown = np.zeros(B, dtype=bool)
    blow_t = np.full(B, np.nan)
    guard2 = cfg.blowup_guard**2

    def check_guard(step_idx: int) -> None:
        abs2 = state.real**2 + state.imag**2
        s1 = abs2 @ w_h1
        bad = ~blown & (~np.isfinite(s1) | (s1 > guard2))
        if np.any(bad):
            blown[bad] = True
            blow_t[bad] = step_idx * dt
            state[bad] = 0.0

    def record_at(row: int) -> None:
        abs2 = state.real**2 + state.imag**2
        m = np.sum(abs2, axis=1)
        h1 = abs2 @ w_h1
        kinetic = 0.5 * (h1 - m)
        if cfg.sigma == 0.0:
            int2s = np.full(B, grid.L**grid.d)
            f1v = 0.5 * m
        else:
            shape = (B,) + grid.shape
            axes = tuple(range(-grid.d, 0))
            scale = grid.N**grid.d / grid.L ** (grid.d / 2.0)
            v = np.fft.ifftn(state.reshape(shape), axes=axes) * scale
            av2 = (v.real**2 + v.imag**2).reshape(B, -1)
            vol = grid.cell_volume
            int2s = vol * np.sum(av2**cfg.sigma, axis=1)
            f1v = vol * np.sum(av2 ** (cfg.sigma + 1.0), axis=1) / (2.0 * cfg.sigma + 2.0)
        out["mass"][row] = m
        out["energy"][row] = kinetic - f1v
        out["f1"][row] = f1v
        out["h1"][row] = h1
        out["int_abs2sigma"][row] = int2s
        for name, idx in mode_list:
            out[name][row] = abs2[:, idx]
        for c, w in zip(spec.tail_cutoffs, tail_w):
            out[f"tail_{c}"][row] = abs2 @ w

    def visit(step_idx: int) -> None:
        if step_idx in anchor_set:
            snapshots[step_idx] = state.copy()
        if step_idx in consume_at:
            for a, d in consume_at[step_idx]:
                diff = state - snapshots[a]
                incs[(a, d)][:] = np.sum(diff.real**2 + diff.imag**2, axis=1)
        for a in [a for a in snapshots if step_idx >= last_use[a]]:
            del snapshots[a]
        if step_idx in sample_row:
            record_at(sample_row[step_idx])

    strang = cfg.scheme == "strang"
    visit(0)
    step_idx = 0
    while step_idx < spec.n_steps:
        m_steps = min(_CHUNK_STEPS, spec.n_steps - step_idx)
        if support.size:
            z = np.empty((B, m_steps, support.size), dtype=np.complex128)
            for b, s in enumerate(streams):
                z[b] = s.draw_circular_block(m_steps, support.size)
        for j in range(m_steps):
            check_guard(step_idx)
            if strang:
                state = apply_nonlinear_batch(state, grid, cfg.sigma, 0.5 * dt, cfg.dealias)
            state = state * decay
            if support.size:
                state[:, support] += z[:, j, :] * kick_vec
            state = apply_nonlinear_batch(
                state, grid, cfg.sigma, 0.5 * dt if strang else dt, cfg.dealias
            )
            step_idx += 1
            visit(step_idx)
    check_guard(spec.n_steps)

    # invalidate recorded values from the blow-up time onward
    times = spec.sample_steps * dt
    for b in np.nonzero(blown)[0]:
        late = times >= blow_t[b] - _TIME_TOL
        for arr in out.values():
            arr[late, b] = np.nan
        for key in incs:
            incs[key][b] = np.nan
    return out, incs, blown, blow_t


def _block_task(args):
    spec, a, b = args
    return _run_block(spec, a, b)


def run_ensemble(
    cfg: SimConfig,
    phi: NoiseOperator,
    law: InitialLaw,
    n_traj: int,
    sample_times,
    master_seed: int,
    *,
    k_report: int = 0,
    tail_cutoffs=(),
    aldous_times=(),
    aldous_deltas=(),
    workers: int = 1,
    block_size: int = 128,
) -> EnsembleRecord:
    """Run n_traj independent trajectories and record observables.

    Blown-up trajectories are flagged, zeroed, and reported; their recorded
    values from the blow-up time on are NaN and they are excluded from
    moment aggregation.  The rest of the ensemble continues.
    """
    if n_traj < 1:
        raise ConfigurationError("n_traj must be at least 1")
    if block_size < 1:
        raise ConfigurationError("block_size must be at least 1")
    if phi.grid != cfg.grid:
        raise ConfigurationError("noise operator grid does not match the dynamics grid")
    times = np.asarray(sample_times, dtype=float)
    if times.size < 1:
        raise ConfigurationError("at least one sample time is required")
    if np.any(np.diff(times) <= 0):
        raise ConfigurationError("sample times must be strictly increasing")
    sample_steps = _steps_of(times, cfg.dt, "sample times")
    anchor_steps = _steps_of(aldous_times, cfg.dt, "increment anchors")
    delta_steps = _steps_of(aldous_deltas, cfg.dt, "increment lags")
    pairs = tuple((int(a), int(d)) for a in anchor_steps for d in delta_steps)

    horizon = int(sample_steps.max())
    if pairs:
        horizon = max(horizon, max(a + d for a, d in pairs))

    spec = _BlockSpec(
        cfg=cfg,
        phi=phi,
        law=law,
        master_seed=int(master_seed),
        sample_steps=sample_steps,
        k_report=int(k_report),
        tail_cutoffs=tuple(int(c) for c in tail_cutoffs),
        aldous_pairs=pairs,
        n_steps=horizon,
    )

    blocks = [(s, min(s + block_size, n_traj)) for s in range(0, n_traj, block_size)]
    if workers > 1 and len(blocks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_block_task, [(spec, a, b) for a, b in blocks]))
    else:
        results = [_run_block(spec, a, b) for a, b in blocks]

    names = list(results[0][0])
    series = {n: np.empty((sample_steps.size, n_traj)) for n in names}
    increments = {
        (float(a * cfg.dt), float(d * cfg.dt)): np.empty(n_traj) for a, d in pairs
    }
    blown = np.zeros(n_traj, dtype=bool)
    blow_times = np.full(n_traj, np.nan)
    for (a, b), (out, incs, bl, bt) in zip(blocks, results):
        for n in names:
            series[n][:, a:b] = out[n]
        for (ai, di), arr in incs.items():
            increments[(float(ai * cfg.dt), float(di * cfg.dt))][a:b] = arr
        blown[a:b] = bl
        blow_times[a:b] = bt

    return EnsembleRecord(
        sample_times=sample_steps * cfg.dt,
        series=series,
        increments=increments,
        blown=blown,
        blow_times=blow_times,
        master_seed=int(master_seed),
        n_traj=n_traj,
    )


def estimate_observable(rec: EnsembleRecord, name: str, t: float):
    """Sample mean, standard error, and count over non-flagged trajectories."""
    if name not in rec.series:
        raise ConfigurationError(
            f"unknown observable {name!r}; recorded: {', '.join(rec.series)}"
        )
    row = rec.series[name][rec.time_index(t)]
    vals = row[~rec.blown]
    n = vals.size
    if n == 0:
        raise ConfigurationError("no valid trajectories to aggregate")
    mean = float(np.mean(vals))
    se = float(np.std(vals, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return mean, se, n


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def write_record_csv(rec: EnsembleRecord, outdir) -> list[Path]:
    """Write one CSV per observable plus summary, flags, and increments."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written = []
    traj_cols = ",".join(f"traj_{i}" for i in range(rec.n_traj))
    for name, arr in rec.series.items():
        path = outdir / f"obs_{name}.csv"
        with open(path, "w") as fh:
            fh.write(f"t,{traj_cols}\n")
            for ti, t in enumerate(rec.sample_times):
                fh.write(_fmt(t) + "," + ",".join(_fmt(v) for v in arr[ti]) + "\n")
        written.append(path)

    path = outdir / "summary.csv"
    with open(path, "w") as fh:
        fh.write("t,observable,mean,std_error,n_valid\n")
        for name in rec.series:
            for t in rec.sample_times:
                if rec.n_valid:
                    mean, se, n = estimate_observable(rec, name, float(t))
                else:
                    mean, se, n = float("nan"), float("nan"), 0
                fh.write(f"{_fmt(float(t))},{name},{_fmt(mean)},{_fmt(se)},{n}\n")
    written.append(path)

    path = outdir / "flags.csv"
    with open(path, "w") as fh:
        fh.write("trajectory,blown,blow_time\n")
        for i in range(rec.n_traj):
            bt = _fmt(float(rec.blow_times[i])) if rec.blown[i] else ""
            fh.write(f"{i},{int(rec.blown[i])},{bt}\n")
    written.append(path)

    if rec.increments:
        path = outdir / "increments.csv"
        with open(path, "w") as fh:
            fh.write(f"anchor_t,delta,{traj_cols}\n")
            for (a, d), arr in sorted(rec.increments.items()):
                fh.write(_fmt(a) + "," + _fmt(d) + "," + ",".join(_fmt(v) for v in arr) + "\n")
        written.append(path)
    return written
