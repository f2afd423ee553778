"""Empirical measures, Wasserstein-1, time averaging, stationarity gaps."""

import numpy as np
import pytest

from sdnls import (
    ConfigurationError,
    EmpiricalMeasure,
    InitialLaw,
    NoiseOperator,
    SimConfig,
    SpectralField,
    gap_resolution,
    hs_norm_sq,
    kb_average,
    marginal_measure,
    run_ensemble,
    stationarity_gap,
    wasserstein1,
)


@pytest.fixture(scope="module")
def stationary_run():
    from sdnls import Grid

    grid = Grid(d=1, L=2 * np.pi, N=64)
    phi = NoiseOperator.band(grid, 0.1, 8, 2.0)
    cfg = SimConfig(lam=0.5, sigma=0.0, grid=grid, dt=0.05)
    rec = run_ensemble(
        cfg, phi, InitialLaw.zero(), 400, np.arange(0.0, 20.01, 0.25), master_seed=314
    )
    return grid, phi, cfg, rec


class TestEmpiricalMeasure:
    def test_weights_normalized(self):
        m = EmpiricalMeasure(np.array([1.0, 2.0]), np.array([2.0, 6.0]))
        assert abs(m.weights.sum() - 1.0) < 1e-12
        assert m.mean() == pytest.approx(1.75)

    def test_rejects_bad_weights(self):
        with pytest.raises(ConfigurationError):
            EmpiricalMeasure(np.array([1.0]), np.array([0.0]))
        with pytest.raises(ConfigurationError):
            EmpiricalMeasure(np.array([]), np.array([]))

    def test_csv(self, tmp_path):
        m = EmpiricalMeasure.from_samples([0.5, 1.5])
        path = m.to_csv(tmp_path / "m.csv")
        lines = path.read_text().splitlines()
        assert lines[0] == "value,weight"
        assert len(lines) == 3


class TestWasserstein:
    def test_identical_measures(self):
        m = EmpiricalMeasure.from_samples([0.1, 0.7, 0.7, 2.0])
        assert wasserstein1(m, m) == 0.0

    def test_translation_of_point_masses(self):
        a = EmpiricalMeasure.from_samples([0.0])
        b = EmpiricalMeasure.from_samples([1.0])
        assert wasserstein1(a, b) == pytest.approx(1.0)

    def test_hand_computed_pair(self):
        a = EmpiricalMeasure.from_samples([0.0, 1.0])
        b = EmpiricalMeasure.from_samples([0.5, 1.5])
        assert wasserstein1(a, b) == pytest.approx(0.5)

    def test_weighted_equals_replicated(self):
        a = EmpiricalMeasure(np.array([0.0, 1.0]), np.array([2.0, 1.0]))
        a_rep = EmpiricalMeasure.from_samples([0.0, 0.0, 1.0])
        b = EmpiricalMeasure.from_samples([0.25, 0.5, 3.0])
        assert wasserstein1(a, b) == pytest.approx(wasserstein1(a_rep, b), rel=1e-12)

    def test_metric_properties_on_random_triples(self):
        rng = np.random.default_rng(0)
        for _ in range(25):
            a = EmpiricalMeasure.from_samples(rng.standard_normal(17))
            b = EmpiricalMeasure.from_samples(rng.standard_normal(23) + 0.5)
            c = EmpiricalMeasure.from_samples(2.0 * rng.standard_normal(11))
            dab, dba = wasserstein1(a, b), wasserstein1(b, a)
            assert dab == pytest.approx(dba, rel=1e-12)
            dac, dcb = wasserstein1(a, c), wasserstein1(c, b)
            assert dab <= dac + dcb + 1e-12
            assert dab > 0.0

    def test_identity_on_equal_multisets(self):
        rng = np.random.default_rng(1)
        v = rng.standard_normal(50)
        a = EmpiricalMeasure.from_samples(v)
        b = EmpiricalMeasure.from_samples(np.sort(v))
        assert wasserstein1(a, b) == 0.0


class TestKbAverage:
    def test_point_mass_for_constant_observable(self, grid64):
        cfg = SimConfig(lam=0.5, sigma=0.0, grid=grid64, dt=0.01)
        u0 = SpectralField.from_modes(grid64, {1: 0.5})
        rec = run_ensemble(
            cfg,
            NoiseOperator.zero(grid64),
            InitialLaw.fixed(u0),
            1,
            np.arange(0.0, 1.01, 0.25),
            master_seed=0,
            tail_cutoffs=(4,),
        )
        # mass is not constant (it decays), but the tail beyond the populated
        # band is identically zero: a constant observable gives a point mass
        m = kb_average(rec, "tail_4", 1.0)
        assert np.all(m.values == m.values[0])

    def test_decaying_mass_mean_matches_time_integral(self, grid64):
        lam, n = 0.5, 5.0
        cfg = SimConfig(lam=lam, sigma=0.0, grid=grid64, dt=0.01)
        u0 = SpectralField.from_modes(grid64, {1: 1.0})
        rec = run_ensemble(
            cfg,
            NoiseOperator.zero(grid64),
            InitialLaw.fixed(u0),
            1,
            np.arange(0.0, n + 1e-12, 0.05),
            master_seed=0,
        )
        m = kb_average(rec, "mass", n)
        m0 = 1.0
        closed = m0 * (1 - np.exp(-2 * lam * n)) / (2 * lam * n)
        # Riemann error of the uniform-schedule average is O(dt_s)
        assert abs(m.mean() - closed) <= 0.6 * 0.05 * 2 * lam * m0 / n + 1e-12

    def test_pooling_consistency(self, stationary_run):
        _, _, _, rec = stationary_run
        full = kb_average(rec, "mass", 10.0)
        rows_a = rec.sample_times <= 5.0 + 1e-12
        rows_b = (rec.sample_times > 5.0) & (rec.sample_times <= 10.0 + 1e-12)
        vals = rec.series["mass"]
        a = EmpiricalMeasure.from_samples(vals[rows_a].ravel())
        b = EmpiricalMeasure.from_samples(vals[rows_b].ravel())
        merged = EmpiricalMeasure.merge([a, b], [rows_a.sum(), rows_b.sum()])
        assert wasserstein1(full, merged) == pytest.approx(0.0, abs=1e-15)

    def test_window_shrinks_with_horizon(self, stationary_run):
        # distance between successive dyadic horizons decreases
        _, _, _, rec = stationary_run
        d1 = wasserstein1(kb_average(rec, "mass", 5.0), kb_average(rec, "mass", 10.0))
        d2 = wasserstein1(kb_average(rec, "mass", 10.0), kb_average(rec, "mass", 20.0))
        assert d2 < d1

    def test_requires_enough_samples(self, grid64):
        cfg = SimConfig(lam=0.5, sigma=0.0, grid=grid64, dt=0.01)
        rec = run_ensemble(
            cfg, NoiseOperator.zero(grid64), InitialLaw.zero(), 1, [0.0, 1.0], master_seed=0
        )
        with pytest.raises(ConfigurationError):
            kb_average(rec, "mass", 0.5)  # single sample time in window


class TestStationarityGap:
    def test_equilibrium_gap_zero(self, grid64):
        cfg = SimConfig(lam=0.5, sigma=0.0, grid=grid64, dt=0.01)
        rec = run_ensemble(
            cfg, NoiseOperator.zero(grid64), InitialLaw.zero(), 3, np.arange(0.0, 1.01, 0.5),
            master_seed=0,
        )
        assert stationarity_gap(rec, "mass", 0.0, 1.0) == 0.0

    def test_zero_start_vs_stationary_equals_mean(self, stationary_run):
        _, phi, cfg, rec = stationary_run
        gap = stationarity_gap(rec, "mass", 0.0, 20.0)
        stat_mean = marginal_measure(rec, "mass", 20.0).mean()
        # W1 to the point mass at zero is the mean of the nonnegative law
        assert gap == pytest.approx(stat_mean, rel=1e-12)
        target = hs_norm_sq(phi, "identity") / (2 * cfg.lam)
        se = np.std(rec.series["mass"][rec.time_index(20.0)], ddof=1) / np.sqrt(rec.n_traj)
        assert abs(gap - target) < 3 * se + 1e-12

    def test_stationary_window_gap_below_resolution(self, stationary_run):
        _, _, _, rec = stationary_run
        gap = stationarity_gap(rec, "mass", 15.0, 20.0)
        res = gap_resolution(rec, "mass", 15.0, 20.0)
        assert gap <= 2.0 * res
