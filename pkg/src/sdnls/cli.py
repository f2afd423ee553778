"""Command-line front end.

Commands::

    sdnls simulate <config>
    sdnls verify   <config> --check {mass,energy,transient,stationary,aldous,tail}
    sdnls kb       <config> --horizons 5,10,20 [--observable mass]

``simulate`` runs the ensemble and writes the observable CSVs, a summary,
and a manifest with SHA-256 content hashes into a run directory named by
the master seed and the config hash.  ``verify`` re-runs the ensemble and
checks one of the drift/stationarity diagnostics, writing its report CSV;
exit code 0 iff the check passes.  ``kb`` computes time-averaged empirical
measures at the given horizons and checks that consecutive Wasserstein-1
distances do not increase beyond Monte Carlo tolerance.

Exit codes: 0 success/pass, 1 check failed, 2 configuration error,
3 simulate finished but at least one trajectory hit the blow-up guard.
The SDNLS_WORKERS environment variable overrides the configured worker
count.
"""

from __future__ import annotations

import argparse
import hashlib
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
from scipy.stats import wasserstein_distance

from . import __version__
from .config import RunSpec, load_config
from .diagnostics import (
    aldous_increment,
    aldous_linear_prediction,
    energy_balance_residual,
    mass_balance_residual,
    stationary_moment_check,
    tightness_tail_profile,
    transient_mass_curve,
)
from .ensemble import EnsembleRecord, run_ensemble, write_record_csv
from .errors import ConfigurationError
from .integrator import SimConfig
from .measures import RESAMPLING_STREAM_BASE, kb_average, wasserstein1
from .noise import NoiseStream, hs_norm_sq

CHECKS = ("mass", "energy", "transient", "stationary", "aldous", "tail")


def _run_dir(spec: RunSpec) -> Path:
    cfg_hash = hashlib.sha256(spec.raw_text.encode()).hexdigest()[:8]
    return spec.output_dir / f"seed{spec.master_seed}-{cfg_hash}"


def _simulate(spec: RunSpec, workers: int) -> tuple[EnsembleRecord, Path, list[Path]]:
    rec = run_ensemble(
        spec.cfg,
        spec.phi,
        spec.law,
        spec.n_traj,
        spec.sample_times,
        spec.master_seed,
        k_report=spec.k_report,
        tail_cutoffs=spec.tail_cutoffs,
        aldous_times=spec.aldous_anchors,
        aldous_deltas=spec.aldous_deltas,
        workers=workers,
        block_size=spec.block_size,
    )
    outdir = _run_dir(spec)
    outdir.mkdir(parents=True, exist_ok=True)
    written = write_record_csv(rec, outdir)
    snapshot = outdir / "config.ini"
    snapshot.write_text(spec.raw_text)
    written.append(snapshot)
    return rec, outdir, written


def _write_manifest(outdir: Path, spec: RunSpec, files: list[Path], started: str) -> Path:
    lines = [
        f"version: sdnls {__version__}",
        f"master_seed: {spec.master_seed}",
        f"config_sha256: {hashlib.sha256(spec.raw_text.encode()).hexdigest()}",
        f"started: {started}",
        f"finished: {datetime.now(timezone.utc).isoformat()}",
        "files:",
    ]
    for f in sorted(files):
        digest = hashlib.sha256(f.read_bytes()).hexdigest()
        lines.append(f"  {digest}  {f.name}")
    path = outdir / "manifest.txt"
    path.write_text("\n".join(lines) + "\n")
    return path


def _fd_floor(rec: EnsembleRecord, name: str, lam: float, dt_s: float) -> float:
    """Bound on the centered-difference truncation error of the drift.

    The third derivative of the expected observable is bounded by
    (2 lam)^3 max |E[X]| for relaxation-type curves; a factor 2 covers the
    slack.
    """
    scale = float(np.nanmax(np.abs(np.nanmean(rec.series[name], axis=1))))
    return 2.0 * dt_s**2 / 6.0 * (2.0 * lam) ** 3 * scale


def _check_mass(spec: RunSpec, rec: EnsembleRecord, outdir: Path) -> tuple[bool, str, list[Path]]:
    lam = spec.lambda_for_checks
    cfg = spec.cfg
    rep = mass_balance_residual(rec, _with_lambda(cfg, lam), spec.phi, spec.window)
    tol = max(
        3.0 * rep.residual_se,
        1e-3 * hs_norm_sq(spec.phi, "identity"),
        _fd_floor(rec, "mass", lam, rep.dt_used),
    )
    path = rep.to_csv(outdir / "report_mass.csv")
    ok = abs(rep.residual) <= tol
    return ok, f"mass balance residual {rep.residual:.3e} (tolerance {tol:.3e})", [path]


def _with_lambda(cfg, lam):
    if lam == cfg.lam:
        return cfg
    return SimConfig(
        lam=lam,
        sigma=cfg.sigma,
        grid=cfg.grid,
        dt=cfg.dt,
        scheme=cfg.scheme,
        dealias=cfg.dealias,
        blowup_guard=cfg.blowup_guard,
    )


def _check_energy(spec: RunSpec, rec: EnsembleRecord, outdir: Path):
    lam = spec.lambda_for_checks
    rep = energy_balance_residual(rec, _with_lambda(spec.cfg, lam), spec.phi, spec.window)
    tol = max(
        3.0 * rep.residual_se,
        1e-2 * hs_norm_sq(spec.phi, "gradient"),
        _fd_floor(rec, "energy", lam, rep.dt_used),
    )
    path = rep.to_csv(outdir / "report_energy.csv")
    ok = abs(rep.residual) <= tol
    return ok, f"energy balance residual {rep.residual:.3e} (tolerance {tol:.3e})", [path]


def _check_transient(spec: RunSpec, rec: EnsembleRecord, outdir: Path):
    curve = transient_mass_curve(rec, _with_lambda(spec.cfg, spec.lambda_for_checks), spec.phi)
    path = curve.to_csv(outdir / "report_transient.csv")
    n = curve.times.size
    picks = np.unique(np.round(np.linspace(0, n - 1, 10)).astype(int))
    worst = 0.0
    ok = True
    for i in picks:
        err = abs(curve.estimated[i] - curve.predicted[i])
        tol = 3.0 * curve.std_error[i] + 1e-12
        ok = ok and err <= tol
        if tol > 0:
            worst = max(worst, err / tol)
    return ok, f"transient mass curve: worst |error|/tolerance {worst:.2f}", [path]


def _check_stationary(spec: RunSpec, rec: EnsembleRecord, outdir: Path):
    lam = spec.lambda_for_checks
    lines = ["k,lhs,rhs,diff_se,bound,equality_pass,bound_pass"]
    ok = True
    msgs = []
    for k in (1, 2):
        chk = stationary_moment_check(rec, spec.phi, lam, k, spec.window)
        lines.append(
            f"{k},{chk.lhs:.17g},{chk.rhs:.17g},{chk.diff_se:.17g},"
            f"{chk.bound:.17g},{int(chk.equality_pass)},{int(chk.bound_pass)}"
        )
        ok = ok and chk.passed
        msgs.append(f"k={k}: |lhs-rhs|={abs(chk.lhs - chk.rhs):.3e} (3SE={3 * chk.diff_se:.3e})")
    path = outdir / "report_stationary.csv"
    path.write_text("\n".join(lines) + "\n")
    return ok, "stationary moment recursion " + "; ".join(msgs), [path]


def _check_aldous(spec: RunSpec, rec: EnsembleRecord, outdir: Path):
    curve = aldous_increment(rec)
    path = curve.to_csv(outdir / "report_aldous.csv")
    lam = spec.lambda_for_checks
    ok = curve.halving_decreases()
    msg = "increment curve decreases under lag halving"
    nonzero = curve.deltas > 0
    if np.any(nonzero):
        dmin = float(curve.deltas[nonzero].min())
        i = int(np.nonzero(np.abs(curve.deltas - dmin) < 1e-12)[0][0])
        pred = float(aldous_linear_prediction(spec.phi, lam, dmin)[0])
        se = curve.std_errors[i]
        small_ok = curve.means[i] <= 2.0 * pred + 3.0 * se
        ok = ok and small_ok
        msg += f"; phi({dmin:g})={curve.means[i]:.3e} vs 2x linear prediction {2 * pred:.3e}"
    if spec.cfg.sigma == 0.0:
        # exact oracle available: every lag must match the closed form
        preds = aldous_linear_prediction(spec.phi, lam, curve.deltas)
        for i in range(curve.deltas.size):
            tol = 3.0 * curve.std_errors[i] + 1e-15
            ok = ok and abs(curve.means[i] - preds[i]) <= tol
    return ok, msg, [path]


def _check_tail(spec: RunSpec, rec: EnsembleRecord, outdir: Path):
    prof = tightness_tail_profile(rec, spec.tail_cutoffs)
    path = prof.to_csv(outdir / "report_tail.csv")
    ok = prof.nonincreasing
    msg = "tail profile nonincreasing in cutoff"
    if spec.cfg.sigma == 0.0 and spec.law.kind == "zero" and spec.phi.support.size:
        k_band = int(np.max(spec.phi.grid.k_inf[spec.phi.support]))
        beyond = [c for c in prof.cutoffs if c >= k_band]
        if beyond:
            i = int(np.nonzero(prof.cutoffs == min(beyond))[0][0])
            exact_zero = prof.sup_mean[i] == 0.0
            ok = ok and exact_zero
            msg += f"; tail beyond the noise band = {prof.sup_mean[i]:.3e}"
    return ok, msg, [path]


_CHECK_FUNCS = {
    "mass": _check_mass,
    "energy": _check_energy,
    "transient": _check_transient,
    "stationary": _check_stationary,
    "aldous": _check_aldous,
    "tail": _check_tail,
}


def cmd_simulate(config_path: str, workers_override: int | None) -> int:
    started = datetime.now(timezone.utc).isoformat()
    spec = load_config(config_path)
    workers = workers_override or spec.workers
    rec, outdir, files = _simulate(spec, workers)
    manifest = _write_manifest(outdir, spec, files, started)
    n_blown = int(rec.blown.sum())
    print(f"wrote {len(files)} files to {outdir} (manifest {manifest.name})")
    if n_blown:
        print(f"WARNING: {n_blown}/{rec.n_traj} trajectories hit the blow-up guard")
        return 3
    return 0


def cmd_verify(config_path: str, check: str, workers_override: int | None) -> int:
    started = datetime.now(timezone.utc).isoformat()
    spec = load_config(config_path)
    if check not in _CHECK_FUNCS:
        raise ConfigurationError(f"unknown check {check!r}; choose from {CHECKS}")
    workers = workers_override or spec.workers
    rec, outdir, files = _simulate(spec, workers)
    ok, msg, reports = _CHECK_FUNCS[check](spec, rec, outdir)
    _write_manifest(outdir, spec, files + reports, started)
    print(f"{'PASS' if ok else 'FAIL'}: {msg}")
    return 0 if ok else 1


def cmd_kb(
    config_path: str, horizons: list[float], observable: str, workers_override: int | None
) -> int:
    started = datetime.now(timezone.utc).isoformat()
    spec = load_config(config_path)
    workers = workers_override or spec.workers
    rec, outdir, files = _simulate(spec, workers)
    horizons = sorted(horizons)
    measures = {h: kb_average(rec, observable, h) for h in horizons}
    reports = []
    for h, m in measures.items():
        reports.append(m.to_csv(outdir / f"kb_{observable}_h{h:g}.csv"))

    dists = [
        wasserstein1(measures[a], measures[b]) for a, b in zip(horizons, horizons[1:])
    ]
    tol = kb_distance_tolerance(rec, observable, horizons)
    ok = all(d2 <= d1 + tol for d1, d2 in zip(dists, dists[1:]))
    lines = ["from,to,w1,tolerance"]
    for (a, b), d in zip(zip(horizons, horizons[1:]), dists):
        lines.append(f"{a:g},{b:g},{d:.17g},{tol:.17g}")
    path = outdir / f"kb_{observable}_curve.csv"
    path.write_text("\n".join(lines) + "\n")
    reports.append(path)
    _write_manifest(outdir, spec, files + reports, started)
    print(
        f"{'PASS' if ok else 'FAIL'}: KB distances {', '.join(f'{d:.3e}' for d in dists)}"
        f" (tolerance {tol:.3e})"
    )
    return 0 if ok else 1


def kb_distance_tolerance(
    rec: EnsembleRecord, observable: str, horizons: list[float], n_boot: int = 48
) -> float:
    """3 SE bootstrap tolerance for differences of consecutive KB distances.

    Resamples trajectories with replacement (jointly across horizons, since
    the averaged measures share them) and takes the spread of the distance
    differences.  Deterministic given the master seed.
    """
    if len(horizons) < 3:
        return 0.0
    gen = NoiseStream(rec.master_seed, RESAMPLING_STREAM_BASE + 1).gen
    valid_idx = np.nonzero(~rec.blown)[0]
    rows = {h: rec.sample_times <= h + 1e-9 for h in horizons}
    obs = rec.series[observable]
    diffs = []
    for _ in range(n_boot):
        pick = gen.choice(valid_idx, size=valid_idx.size, replace=True)
        ms = {}
        for h in horizons:
            vals = obs[np.ix_(rows[h], pick)].ravel()
            ms[h] = vals
        ds = [
            float(wasserstein_distance(ms[a], ms[b]))
            for a, b in zip(horizons, horizons[1:])
        ]
        diffs.extend(np.diff(ds))
    return float(3.0 * np.std(diffs, ddof=1)) if diffs else 0.0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="sdnls",
        description="Spectral Monte Carlo laboratory for the damped stochastic NLS",
    )
    parser.add_argument("--version", action="version", version=f"sdnls {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="run the ensemble and write CSVs")
    p_sim.add_argument("config")

    p_ver = sub.add_parser("verify", help="run one quantitative check")
    p_ver.add_argument("config")
    p_ver.add_argument("--check", required=True, choices=CHECKS)

    p_kb = sub.add_parser("kb", help="Krylov-Bogolyubov averaging convergence")
    p_kb.add_argument("config")
    p_kb.add_argument("--horizons", required=True, help="comma-separated horizons")
    p_kb.add_argument("--observable", default="mass")

    args = parser.parse_args(argv)
    workers_override = None
    env = os.environ.get("SDNLS_WORKERS")
    if env:
        try:
            workers_override = int(env)
        except ValueError:
            print(f"error: SDNLS_WORKERS must be an integer, got {env!r}", file=sys.stderr)
            return 2

    try:
        if args.command == "simulate":
            return cmd_simulate(args.config, workers_override)
        if args.command == "verify":
            return cmd_verify(args.config, args.check, workers_override)
        if args.command == "kb":
            horizons = [float(s) for s in args.horizons.split(",") if s]
            if not horizons:
                raise ConfigurationError("at least one horizon is required")
            return cmd_kb(args.config, horizons, args.observable, workers_override)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    raise AssertionError("unreachable")


if __name__ == "__main__":
    sys.exit(main())
