"""Configuration parsing, CLI commands, exit codes, and reproducibility."""

import hashlib
import os

import numpy as np
import pytest

from sdnls import ConfigurationError, load_config
from sdnls.cli import main

BASE = """
[grid]
dimension = 1
length = 6.283185307179586
points = 32

[dynamics]
lambda = 0.5
sigma = 0.0
dt = 0.05
scheme = strang

[noise]
kind = band
amplitude = 0.1
k_max = 8
decay_power = 2.0

[initial]
kind = zero

[run]
t_final = 16.0
sample_interval = 0.25
n_traj = 150
master_seed = 97531
k_report = 8
tail_cutoffs = 0,4,8,12

[aldous]
anchors = 12,13,14
deltas = 0.05,0.1,0.2

[output]
directory = {outdir}
"""


def write_config(tmp_path, name="run.ini", extra="", **fmt):
    fmt.setdefault("outdir", (tmp_path / "runs").as_posix())
    text = BASE.format(**fmt) + extra
    path = tmp_path / name
    path.write_text(text)
    return path


class TestConfigParsing:
    def test_full_parse(self, tmp_path):
        spec = load_config(write_config(tmp_path))
        assert spec.cfg.lam == 0.5
        assert spec.cfg.grid.N == 32
        assert spec.n_traj == 150
        assert spec.tail_cutoffs == (0, 4, 8, 12)
        assert spec.aldous_deltas == (0.05, 0.1, 0.2)
        assert spec.sample_times[-1] == pytest.approx(16.0)
        assert spec.burn_in == pytest.approx(8.0)  # min(10/lam, T/2)
        assert spec.lambda_for_checks == 0.5

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigurationError, match="no-such"):
            load_config(tmp_path / "no-such.ini")

    def test_bad_value(self, tmp_path):
        path = write_config(tmp_path)
        path.write_text(path.read_text().replace("lambda = 0.5", "lambda = fast"))
        with pytest.raises(ConfigurationError):
            load_config(path)

    def test_explicit_modes_noise(self, tmp_path):
        extra = ""
        path = write_config(tmp_path)
        text = path.read_text().replace(
            "kind = band\namplitude = 0.1\nk_max = 8\ndecay_power = 2.0",
            "kind = modes\nmodes =\n    0 0.1 0.0\n    1 0.05 -0.02\n    -1 0.05 0.02",
        )
        path.write_text(text)
        spec = load_config(path)
        assert spec.phi.support.size == 3
        idx = spec.cfg.grid.index_of(1)
        assert spec.phi.phi[idx] == pytest.approx(0.05 - 0.02j)

    def test_fixed_initial_field_file(self, tmp_path):
        field_file = tmp_path / "u0.txt"
        field_file.write_text("# k re im\n0 0.3 0.0\n2 0.0 0.1\n")
        path = write_config(tmp_path, extra="")
        text = path.read_text().replace("kind = zero", f"kind = fixed\nfile = {field_file.name}")
        path.write_text(text)
        spec = load_config(path)
        assert spec.law.kind == "fixed"
        assert spec.law.field0.coeffs[spec.cfg.grid.index_of(2)] == 0.1j

    def test_misaligned_sampling(self, tmp_path):
        path = write_config(tmp_path)
        path.write_text(path.read_text().replace("t_final = 16.0", "t_final = 16.1"))
        with pytest.raises(ConfigurationError):
            load_config(path)


class TestSimulate:
    def test_exit_zero_and_outputs(self, tmp_path, capsys):
        path = write_config(tmp_path)
        assert main(["simulate", str(path)]) == 0
        runs = list((tmp_path / "runs").iterdir())
        assert len(runs) == 1
        outdir = runs[0]
        assert (outdir / "summary.csv").exists()
        assert (outdir / "manifest.txt").exists()
        assert (outdir / "obs_mass.csv").exists()
        assert (outdir / "config.ini").read_text() == path.read_text()

    def test_missing_config_exit_2(self, tmp_path, capsys):
        rc = main(["simulate", str(tmp_path / "absent.ini")])
        assert rc == 2
        assert "absent.ini" in capsys.readouterr().err

    def test_rerun_reproduces_hashes(self, tmp_path):
        path = write_config(tmp_path)

        def run_and_hash():
            assert main(["simulate", str(path)]) in (0,)
            outdir = next((tmp_path / "runs").iterdir())
            hashes = {}
            for f in sorted(outdir.glob("*.csv")):
                hashes[f.name] = hashlib.sha256(f.read_bytes()).hexdigest()
            return hashes

        first = run_and_hash()
        second = run_and_hash()
        assert first == second

    def test_worker_env_override_reproduces(self, tmp_path, monkeypatch):
        path = write_config(tmp_path)
        main(["simulate", str(path)])
        outdir = next((tmp_path / "runs").iterdir())
        ref = (outdir / "obs_mass.csv").read_bytes()
        monkeypatch.setenv("SDNLS_WORKERS", "2")
        main(["simulate", str(path)])
        assert (outdir / "obs_mass.csv").read_bytes() == ref

    def test_blowup_exit_3(self, tmp_path, capsys):
        path = write_config(tmp_path)
        text = path.read_text().replace("scheme = strang", "scheme = strang\nblowup_guard = 1e-3")
        path.write_text(text)
        rc = main(["simulate", str(path)])
        assert rc == 3
        outdir = next((tmp_path / "runs").iterdir())
        flags = (outdir / "flags.csv").read_text().splitlines()[1:]
        assert all(line.split(",")[1] == "1" for line in flags)


class TestVerify:
    @pytest.mark.parametrize("check", ["transient", "mass", "energy", "stationary", "aldous", "tail"])
    def test_linear_checks_pass(self, tmp_path, check, capsys):
        path = write_config(tmp_path)
        assert main(["verify", str(path), "--check", check]) == 0
        assert "PASS" in capsys.readouterr().out

    def test_wrong_lambda_negative_control(self, tmp_path, capsys):
        path = write_config(tmp_path, extra="\n[verify]\nlambda_for_checks = 0.9\n")
        assert main(["verify", str(path), "--check", "mass"]) == 1
        out = capsys.readouterr().out
        assert "FAIL" in out and "tolerance" in out

    def test_nonlinear_stationary_passes(self, tmp_path, capsys):
        path = write_config(tmp_path)
        text = path.read_text().replace("sigma = 0.0", "sigma = 1.0")
        text = text.replace("dt = 0.05", "dt = 0.01")
        text = text.replace("t_final = 16.0", "t_final = 8.0")
        text = text.replace("n_traj = 150", "n_traj = 96")
        path.write_text(text)
        assert main(["verify", str(path), "--check", "stationary"]) == 0

    def test_report_written(self, tmp_path):
        path = write_config(tmp_path)
        main(["verify", str(path), "--check", "transient"])
        outdir = next((tmp_path / "runs").iterdir())
        assert (outdir / "report_transient.csv").exists()


class TestKb:
    def test_nonincreasing_distances(self, tmp_path, capsys):
        path = write_config(tmp_path)
        assert main(["kb", str(path), "--horizons", "4,8,16"]) == 0
        outdir = next((tmp_path / "runs").iterdir())
        curve = (outdir / "kb_mass_curve.csv").read_text().splitlines()
        assert curve[0] == "from,to,w1,tolerance"
        assert len(curve) == 3

    def test_single_horizon_trivially_passes(self, tmp_path):
        path = write_config(tmp_path)
        assert main(["kb", str(path), "--horizons", "8"]) == 0

    def test_unknown_observable_exit_2(self, tmp_path, capsys):
        path = write_config(tmp_path)
        assert main(["kb", str(path), "--horizons", "4,8", "--observable", "vorticity"]) == 2
