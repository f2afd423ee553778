"""Flat sectioned key=value run configuration.

Example::

    [grid]
    dimension = 1
    length = 6.283185307179586
    points = 64

    [dynamics]
    lambda = 0.5
    sigma = 1.0
    dt = 0.001
    scheme = strang
    dealias = false
    blowup_guard = 1e6

    [noise]
    kind = band
    amplitude = 0.1
    k_max = 8
    decay_power = 2.0

    [initial]
    kind = zero

    [run]
    t_final = 20.0
    sample_interval = 0.1
    n_traj = 1000
    master_seed = 20240901
    k_report = 8
    tail_cutoffs = 0,2,4,8,12,16
    workers = 1

    [aldous]
    anchors = 12,13,14,15,16,17,18,19
    deltas = 0.05,0.1,0.2,0.4

    [output]
    directory = runs

Noise kinds: ``band`` (amplitude, k_max, decay_power gives
phi_k = amplitude / (1 + kappa_k^2)^(decay_power/2) for |k|_inf <= k_max),
``modes`` (explicit whitespace-separated ``k re im`` triples, one per line,
with ``k`` a comma-joined integer tuple for d = 2), or ``none``.

Initial kinds: ``zero``; ``fixed`` with ``file`` pointing at a mode-triple
text file in the same format as noise ``modes``; ``gaussian_modes`` with the
band parameters of the per-mode scale profile.

Optional extras: ``[run] burn_in`` overrides the default stationary-window
start min(10/lambda, t_final/2); ``[run] block_size`` sets the trajectory
batch size (part of the bit-reproducibility envelope); ``[verify]
lambda_for_checks`` makes the verification commands evaluate the balance
laws at a different damping rate than the dynamics, which is only useful as
a negative control.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .ensemble import InitialLaw
from .errors import ConfigurationError
from .field import Grid, SpectralField
from .integrator import SimConfig
from .noise import NoiseOperator

__all__ = ["RunSpec", "load_config", "parse_mode_triples"]


@dataclass(frozen=True)
class RunSpec:
    """Everything a command needs to reproduce one experiment."""

    cfg: SimConfig
    phi: NoiseOperator
    law: InitialLaw
    t_final: float
    sample_interval: float
    n_traj: int
    master_seed: int
    k_report: int
    tail_cutoffs: tuple[int, ...]
    aldous_anchors: tuple[float, ...]
    aldous_deltas: tuple[float, ...]
    workers: int
    block_size: int
    output_dir: Path
    burn_in: float
    lambda_for_checks: float
    raw_text: str

    @property
    def sample_times(self) -> np.ndarray:
        n = int(round(self.t_final / self.sample_interval))
        return np.arange(n + 1) * self.sample_interval

    @property
    def window(self) -> tuple[float, float]:
        return (self.burn_in, self.t_final)


def _get(cp, section, key, cast, default=None, required=False):
    try:
        raw = cp.get(section, key)
    except (configparser.NoSectionError, configparser.NoOptionError):
        if required:
            raise ConfigurationError(f"missing required option [{section}] {key}")
        return default
    try:
        if cast is bool:
            lowered = raw.strip().lower()
            if lowered in ("true", "1", "yes", "on"):
                return True
            if lowered in ("false", "0", "no", "off"):
                return False
            raise ValueError(raw)
        return cast(raw)
    except ValueError as exc:
        raise ConfigurationError(f"bad value for [{section}] {key}: {raw!r}") from exc


def _num_list(raw: str, cast):
    items = [s for s in raw.replace(",", " ").split() if s]
    return tuple(cast(s) for s in items)


def parse_mode_triples(text: str, grid: Grid):
    """(k, re, im) entries, one per line; k is comma-joined for d = 2."""
    entries = []
    for line in text.strip().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 3:
            raise ConfigurationError(f"mode line must be 'k re im': {line!r}")
        kraw, re_s, im_s = parts
        if grid.d == 1:
            k = int(kraw)
        else:
            comps = kraw.split(",")
            if len(comps) != grid.d:
                raise ConfigurationError(f"mode {kraw!r} must have {grid.d} components")
            k = tuple(int(c) for c in comps)
        entries.append((k, float(re_s), float(im_s)))
    return entries


def _load_fixed_field(path: Path, grid: Grid) -> SpectralField:
    if not path.exists():
        raise ConfigurationError(f"fixed initial field file not found: {path}")
    entries = parse_mode_triples(path.read_text(), grid)
    return SpectralField.from_modes(grid, {k: complex(re, im) for k, re, im in entries})


def load_config(path) -> RunSpec:
    """Parse the configuration file into a fully validated RunSpec."""
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"config file not found: {path}")
    text = path.read_text()
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigurationError(f"malformed config {path}: {exc}") from exc

    grid = Grid(
        d=_get(cp, "grid", "dimension", int, 1),
        L=_get(cp, "grid", "length", float, 2.0 * np.pi),
        N=_get(cp, "grid", "points", int, required=True),
    )
    cfg = SimConfig(
        lam=_get(cp, "dynamics", "lambda", float, required=True),
        sigma=_get(cp, "dynamics", "sigma", float, required=True),
        grid=grid,
        dt=_get(cp, "dynamics", "dt", float, required=True),
        scheme=_get(cp, "dynamics", "scheme", str, "strang").strip().lower(),
        dealias=_get(cp, "dynamics", "dealias", bool, False),
        blowup_guard=_get(cp, "dynamics", "blowup_guard", float, 1e6),
    )

    nkind = _get(cp, "noise", "kind", str, "none").strip().lower()
    if nkind == "band":
        phi = NoiseOperator.band(
            grid,
            amplitude=_get(cp, "noise", "amplitude", float, required=True),
            k_max=_get(cp, "noise", "k_max", int, required=True),
            decay_power=_get(cp, "noise", "decay_power", float, 0.0),
        )
    elif nkind == "modes":
        raw = _get(cp, "noise", "modes", str, required=True)
        phi = NoiseOperator.from_modes(grid, parse_mode_triples(raw, grid))
    elif nkind == "none":
        phi = NoiseOperator.zero(grid)
    else:
        raise ConfigurationError(f"unknown noise kind {nkind!r}")

    ikind = _get(cp, "initial", "kind", str, "zero").strip().lower()
    if ikind == "zero":
        law = InitialLaw.zero()
    elif ikind == "fixed":
        file_raw = _get(cp, "initial", "file", str, required=True)
        fpath = Path(file_raw)
        if not fpath.is_absolute():
            fpath = path.parent / fpath
        law = InitialLaw.fixed(_load_fixed_field(fpath, grid))
    elif ikind == "gaussian_modes":
        prof = NoiseOperator.band(
            grid,
            amplitude=_get(cp, "initial", "amplitude", float, required=True),
            k_max=_get(cp, "initial", "k_max", int, required=True),
            decay_power=_get(cp, "initial", "decay_power", float, 0.0),
        )
        law = InitialLaw.gaussian_modes(prof)
    else:
        raise ConfigurationError(f"unknown initial kind {ikind!r}")

    t_final = _get(cp, "run", "t_final", float, required=True)
    sample_interval = _get(cp, "run", "sample_interval", float, required=True)
    if not (0 < sample_interval <= t_final):
        raise ConfigurationError("sample_interval must lie in (0, t_final]")
    n_samp = round(t_final / sample_interval)
    if abs(n_samp * sample_interval - t_final) > 1e-9 * max(1.0, t_final):
        raise ConfigurationError("t_final must be a multiple of sample_interval")
    lam = cfg.lam
    burn_in_default = min(10.0 / lam, 0.5 * t_final)
    spec = RunSpec(
        cfg=cfg,
        phi=phi,
        law=law,
        t_final=t_final,
        sample_interval=sample_interval,
        n_traj=_get(cp, "run", "n_traj", int, 1),
        master_seed=_get(cp, "run", "master_seed", int, 0),
        k_report=_get(cp, "run", "k_report", int, 0),
        tail_cutoffs=_num_list(_get(cp, "run", "tail_cutoffs", str, ""), int),
        aldous_anchors=_num_list(_get(cp, "aldous", "anchors", str, ""), float),
        aldous_deltas=_num_list(_get(cp, "aldous", "deltas", str, ""), float),
        workers=_get(cp, "run", "workers", int, 1),
        block_size=_get(cp, "run", "block_size", int, 128),
        output_dir=Path(_get(cp, "output", "directory", str, "runs")),
        burn_in=_get(cp, "run", "burn_in", float, burn_in_default),
        lambda_for_checks=_get(cp, "verify", "lambda_for_checks", float, cfg.lam),
        raw_text=text,
    )
    if spec.n_traj < 1:
        raise ConfigurationError("n_traj must be at least 1")
    if spec.workers < 1:
        raise ConfigurationError("workers must be at least 1")
    return spec
