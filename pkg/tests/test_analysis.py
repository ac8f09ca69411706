import math

import numpy as np
import pytest

from atomwalk import analysis as an
from atomwalk.dynamics import IntegrationError, integrate
from atomwalk.model import AtomInit, Fock, InitialCondition, SystemParams

EXCITED = InitialCondition(Fock(10), AtomInit.excited(), 0.0, 25.0)


@pytest.fixture(scope="module")
def chaotic_runs():
    p = SystemParams(delta=0.4)
    return {(d0, ri): an.lyapunov_max(p, EXCITED, 3e4, ri, d0)
            for d0, ri in [(1e-8, 1.0), (1e-9, 1.0), (1e-6, 1.0), (1e-8, 4.0), (1e-8, 0.5), (1e-8, 2.0)]}


@pytest.fixture(scope="module")
def rows():
    return an.detuning_sweep([0.0, 0.4, 32.0], SystemParams(), EXCITED, horizon=3000.0,
                             window=(0.0, 500.0))


class TestLyapunov:
    def test_integrable_resonance(self):
        r = an.lyapunov_max(SystemParams(delta=0.0), EXCITED, horizon=1e4)
        assert abs(r.lam) < 0.002
        assert r.curve_tau.size == 10000 and r.horizon == 1e4

    def test_resonant_separation_grows_polynomially(self):
        # independent of the Benettin kernel: two free flights with slightly
        # different momenta separate linearly, not exponentially
        p = SystemParams(delta=0.0)
        a = integrate(EXCITED.build(p), p, 1000.0, sample_dt=1.0)
        b = integrate(EXCITED.replace(p0=25.0 + 1e-8).build(p), p, 1000.0, sample_dt=1.0)
        d = np.abs(b.x - a.x)
        assert d[1000] / d[500] == pytest.approx(2.0, rel=1e-3)

    def test_chaotic_positive(self):
        r = an.lyapunov_max(SystemParams(delta=0.4), EXCITED, horizon=1e4)
        assert r.lam > 0.01
        assert r.spread >= 0 and r.stderr > 0

    @staticmethod
    def _within_2sigma(a, b):
        return abs(a.lam - b.lam) <= 2 * math.hypot(a.stderr, b.stderr)

    def test_invariant_under_d0(self, chaotic_runs):
        base = chaotic_runs[(1e-8, 1.0)]
        assert self._within_2sigma(base, chaotic_runs[(1e-9, 1.0)])
        assert self._within_2sigma(base, chaotic_runs[(1e-6, 1.0)])

    def test_invariant_under_renorm_interval(self, chaotic_runs):
        assert self._within_2sigma(chaotic_runs[(1e-8, 1.0)], chaotic_runs[(1e-8, 4.0)])
        assert self._within_2sigma(chaotic_runs[(1e-8, 0.5)], chaotic_runs[(1e-8, 2.0)])

    def test_clamping(self):
        r = an.LyapunovResult(0.0, -0.003, np.array([1.0]), np.array([-0.003]), 1.0, 1.0, 1e-8, 0.0, 0.0)
        assert r.clamped and r.lam == 0.0
        r = an.lyapunov_max(SystemParams(delta=0.0), EXCITED, horizon=100.0)
        assert r.lam == max(r.raw, 0.0)

    @pytest.mark.parametrize("kw", [dict(d0=1e-10), dict(d0=1e-5), dict(horizon=0.5), dict(renorm_interval=0.0)])
    def test_bad_arguments(self, kw):
        with pytest.raises(ValueError):
            an.lyapunov_max(SystemParams(), EXCITED, **{"horizon": 10.0, **kw})

    def test_deterministic(self):
        p = SystemParams(delta=0.4)
        a = an.lyapunov_max(p, EXCITED, horizon=500.0)
        b = an.lyapunov_max(p, EXCITED, horizon=500.0)
        assert np.array_equal(a.curve_lambda, b.curve_lambda)


class TestFidelityDecay:
    def test_no_detuning_difference(self):
        r = an.fidelity_decay(SystemParams(delta=0.4), EXCITED, delta_delta=0.0, horizon=100.0)
        assert np.max(np.abs(r.series.values - 1.0)) < 1e-13
        assert math.isnan(r.rate)

    def test_series_properties(self):
        r = an.fidelity_decay(SystemParams(delta=0.4), EXCITED, delta_delta=1e-4, horizon=300.0)
        f = r.series.values
        assert f[0] == 1.0
        assert np.all((f >= 0) & (f <= 1))
        assert r.rate > 0 and r.separation_rate == 0.5 * r.rate
        assert r.fit_end <= 300.0

    def test_log_infidelity(self):
        r = an.FidelityResult(an.obs.TimeSeries(0, 1, [1.0, 0.9]), 0.0, 1.0, 1e-4)
        li = r.log10_infidelity
        assert li[0] == -np.inf and li[1] == pytest.approx(-1.0)


class TestSpectralFlatness:
    def test_tone_vs_noise(self):
        t = np.arange(0, 1000, 0.1)
        tone = an.obs.TimeSeries(0, 0.1, np.sin(2 * math.pi * 0.2 * t))
        noise = an.obs.TimeSeries(0, 0.1, np.random.default_rng(0).normal(size=t.size))
        assert an.spectral_flatness(tone) < 0.05
        assert an.spectral_flatness(noise) > 0.4

    def test_constant(self):
        assert an.spectral_flatness(an.obs.TimeSeries(0, 0.1, np.ones(200))) == 0.0


class TestSweep:
    def test_order_and_fields(self, rows):
        assert [r.delta for r in rows] == [0.0, 0.4, 32.0]
        assert all(r.sigma_P >= 0 for r in rows)

    def test_resonant_row(self, rows):
        r = rows[0]
        assert r.lam < 0.01 and r.sigma_P > 0.05
        assert not r.irregular

    def test_far_detuned_row(self, rows):
        r = rows[2]
        assert r.lam < 0.01 and r.sigma_P < 0.05 and not r.irregular

    def test_chaotic_row(self, rows):
        assert rows[1].lam > 0.01 and rows[1].irregular

    def test_row_failure_is_contained(self, monkeypatch):
        def boom(*a, **k):
            raise IntegrationError("forced")
        monkeypatch.setattr(an, "lyapunov_max", boom)
        (row,) = an.detuning_sweep([0.4], SystemParams(), EXCITED, horizon=10.0, window=(0.0, 20.0))
        assert math.isnan(row.lam) and row.meta["error_lambda"] == "forced"
        assert row.sigma_P >= 0


def test_jaccard():
    assert an.jaccard({1, 2, 3}, {2, 3, 4}) == 0.5
    assert an.jaccard([], []) == 1.0
    assert an.jaccard({1}, set()) == 0.0


class TestScattering:
    def test_ballistic_free_flight(self):
        p = SystemParams(delta=0.0)
        p0 = np.array([40.0, 100.0])
        recs = an.scattering_scan(p0, p, EXCITED, tau_max=1e5)
        for r, q in zip(recs, p0):
            assert r.T == pytest.approx(1.5 * math.pi / (0.001 * q), abs=1e-5)
            assert r.m == 0 and not r.timed_out
            # the crossing time is bisected to 1e-6
            assert r.x_exit == pytest.approx(1.5 * math.pi, abs=1e-6)

    def test_ballistic_negative_direction(self):
        (r,) = an.scattering_scan([-100.0], SystemParams(delta=0.0), EXCITED)
        assert r.T == pytest.approx(0.5 * math.pi / 0.1, abs=1e-5)
        assert r.x_exit == pytest.approx(-0.5 * math.pi, abs=1e-6)

    def test_fast_detuned_nearly_ballistic(self):
        (r,) = an.scattering_scan([1000.0], SystemParams(delta=32.0), EXCITED)
        assert r.T == pytest.approx(1.5 * math.pi, rel=1e-2) and r.m == 0

    def test_timeout_flag(self):
        (r,) = an.scattering_scan([0.0], SystemParams(delta=0.0), EXCITED, tau_max=50.0)
        assert r.timed_out and r.T == 50.0

    def test_deterministic(self):
        grid = np.linspace(45.9, 46.9, 6)
        a = an.scattering_scan(grid, SystemParams(delta=0.4), EXCITED)
        b = an.scattering_scan(grid, SystemParams(delta=0.4), EXCITED)
        assert a == b

    def test_bad_launch_point(self):
        with pytest.raises(ValueError):
            an.scattering_scan([10.0], SystemParams(), EXCITED.replace(x0=5.0))


class TestMaps:
    def test_position_free_flight(self):
        rows = an.position_map([10.0, 30.0], SystemParams(delta=0.0), EXCITED, [300.0, 1000.0])
        for p0, x1, x2 in rows:
            assert x1 == pytest.approx(0.001 * p0 * 300.0, abs=1e-9)
            assert x2 == pytest.approx(0.001 * p0 * 1000.0, abs=1e-9)

    def test_inversion_map_initial(self):
        rows = an.inversion_map([-0.5, 0.5], SystemParams(delta=32.0), EXCITED, [1e-9])
        assert [r[1] for r in rows] == pytest.approx([-0.5, 0.5], abs=1e-6)

    def test_inversion_map_resonant_excited(self):
        # z_in = 1 at delta = 0 follows the closed form
        (row,) = an.inversion_map([1.0], SystemParams(delta=0.0), EXCITED, [100.0])
        w = 0.001 * 25.0
        assert row[1] == pytest.approx(math.cos(2 * math.sqrt(11) * math.sin(w * 100.0) / w), abs=1e-8)

    def test_snapshot_times_validated(self):
        with pytest.raises(ValueError):
            an.position_map([1.0], SystemParams(), EXCITED, [100.0, 50.0])


class TestHorizon:
    def test_value(self):
        assert an.predictability_horizon(0.04, 1e3, 1.0) == pytest.approx(172.69, abs=0.01)

    def test_trivial(self):
        assert an.predictability_horizon(0.04, 2.0, 2.0) == 0.0

    def test_precision_doubling(self):
        h1 = an.predictability_horizon(0.04, 1.0, 1e-4)
        h2 = an.predictability_horizon(0.04, 1.0, 0.5e-4)
        assert h2 - h1 == pytest.approx(math.log(2) / 0.04)

    def test_non_positive_lambda(self):
        assert an.predictability_horizon(0.0, 10.0, 1.0) == math.inf

    def test_invalid(self):
        with pytest.raises(ValueError):
            an.predictability_horizon(0.04, 0.5, 1.0)


class TestSegments:
    @pytest.mark.parametrize("vals,n", [([1, 2, 3], 1), ([3, 2, 1], 1), ([1, 2, 1], 2),
                                        ([1, 2, 3, 2, 1, 2], 3), ([1, 1, 2, 2, 1], 2), ([5, 5, 5], 1), ([7], 1)])
    def test_counts(self, vals, n):
        assert an.count_monotone_segments(vals) == n

    def test_total_variation(self):
        assert an.total_variation([0, 1, -1, 2]) == 6.0

    def test_regular_window_saturates(self):
        r = an.fractal_refinement((45.9, 46.9), SystemParams(delta=32.0), EXCITED, levels=(10, 40))
        assert r.counts == (1, 1)
        assert not r.strictly_increasing and r.growth == (1.0,)


def test_parallel_map_order():
    items = list(range(-20, 20))
    assert an.parallel_map(abs, items, workers=2) == [abs(i) for i in items]
    assert an.parallel_map(abs, [], workers=2) == []


def test_parallel_scan_matches_serial():
    grid = np.linspace(46.0, 46.5, 4)
    p = SystemParams(delta=0.4)
    assert an.scattering_scan(grid, p, EXCITED, workers=2) == an.scattering_scan(grid, p, EXCITED)


def test_write_rows_csv(tmp_path):
    an.write_rows_csv(tmp_path / "r.csv", ["a", "b", "c"], [(1.0 / 3, True, "x")], {"k": 1})
    assert (tmp_path / "r.csv").read_text().splitlines() == ["# k = 1", "a,b,c", "0.333333333333,1,x"]
