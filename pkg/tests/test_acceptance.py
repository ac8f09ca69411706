"""Acceptance criteria 1-11.

Each test prints one ``criterion N: PASS|FAIL`` line (collected again in
the terminal summary) and then asserts.  Run alone with

    pytest tests/test_acceptance.py -v -s

or ``python tests/test_acceptance.py``.  Expect about 12 minutes on a
single core; criterion 9 dominates and uses every available core.
"""

import math
import os
import sys
import time
import warnings

import numpy as np
import pytest

from atomwalk import analysis as an
from atomwalk import observables as obs
from atomwalk import oracles as orc
from atomwalk.config import PRESETS, loads
from atomwalk.dynamics import integrate
from atomwalk.model import AtomInit, Coherent, Fock, InitialCondition, QCState, SystemParams

pytestmark = pytest.mark.acceptance

CORES = len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else os.cpu_count()


def preset_cfg(name, command):
    return loads("", command, base=PRESETS[name])


def fock_excited(delta, p0=25.0):
    return SystemParams(delta=delta), InitialCondition(Fock(10), AtomInit.excited(), 0.0, p0)


def coherent(z0, delta=0.4):
    return (SystemParams(delta=delta, n_trunc=100),
            InitialCondition(Coherent(math.sqrt(10)), AtomInit.from_inversion(z0), 0.0, 25.0))


def _warm_up():
    p, ic = fock_excited(0.4)
    integrate(ic.build(p), p, 1.0)
    integrate(ic.build(p), p, 1.0, form="amplitude")


def test_1_conservation(acceptance_report):
    _warm_up()
    p, ic = fock_excited(0.4)
    t0 = time.perf_counter()
    tr = integrate(ic.build(p), p, 1000.0)
    elapsed = time.perf_counter() - t0
    R = tr.rung_norms()
    dR = float(np.max(np.abs(R - R[0])))
    dE = float(np.max(np.abs(tr.energy() - tr.energy()[0])))
    ok = dR < 1e-8 and dE < 1e-8 and elapsed < 10
    acceptance_report(1, ok, f"max |dR_n| = {dR:.2e}, max |dE| = {dE:.2e} (< 1e-8), runtime {elapsed:.2f} s (< 10 s)")
    assert ok


def test_2_resonant_oracle(acceptance_report):
    _warm_up()
    cfg = preset_cfg("fig1a", "simulate")
    p, ic = cfg.params, cfg.initial
    t0 = time.perf_counter()
    period = math.pi / (p.omega_r * ic.p0)
    tr = integrate(ic.build(p), p, cfg.section("simulate")["tau_end"], sample_dt=cfg.section("simulate")["sample_dt"])
    P = obs.purity(tr)
    two = tr.tau <= 2 * period
    err = float(np.max(np.abs(P[two] - orc.resonant_purity(10, p.omega_r, ic.p0, tr.tau[two]))))
    found = obs.autocorrelation_period(obs.TimeSeries.from_samples(tr.tau, P), min_lag=0.4 * period)
    elapsed = time.perf_counter() - t0
    rel = abs(found - period) / period
    ok = err < 1e-6 and rel < 0.01 and elapsed < 5
    acceptance_report(2, ok, f"max |P - P_exact| over two periods = {err:.2e} (< 1e-6), period {found:.3f} "
                             f"vs {period:.3f} ({100 * rel:.3f}% < 1%), runtime {elapsed:.2f} s (< 5 s)")
    assert ok


def test_3_representation_equivalence(acceptance_report):
    worst = {}
    for name in ("fig1a", "fig1b"):
        cfg = preset_cfg(name, "simulate")
        p, s0 = cfg.params, cfg.initial.build(cfg.params)
        dt = cfg.section("simulate")["sample_dt"]
        tb = integrate(s0, p, 500.0, sample_dt=dt, form="bloch")
        ta = integrate(s0, p, 500.0, sample_dt=dt, form="amplitude")
        worst[name] = max(float(np.max(np.abs(tb.x - ta.x))), float(np.max(np.abs(tb.p - ta.p))),
                          float(np.max(np.abs(obs.inversion(tb) - obs.inversion(ta)))),
                          float(np.max(np.abs(obs.purity(tb) - obs.purity(ta)))))
    ok = all(v < 1e-8 for v in worst.values())
    acceptance_report(3, ok, "max |diff| of (x, p, z, P) on [0, 500]: "
                      + ", ".join(f"{k} {v:.2e}" for k, v in worst.items()) + " (< 1e-8)")
    assert ok


def test_4_doppler_rabi_spectrum(acceptance_report):
    _warm_up()
    cfg = preset_cfg("fig1c", "spectrum")
    opt = cfg.section("spectrum")
    p, ic = cfg.params, cfg.initial
    t0 = time.perf_counter()
    tr = integrate(ic.build(p), p, opt["tau_end"], sample_dt=opt["sample_dt"])
    freqs, mag = obs.power_spectrum(obs.TimeSeries.from_samples(tr.tau, obs.purity(tr)))
    peak = float(freqs[1:][np.argmax(mag[1:])])
    elapsed = time.perf_counter() - t0
    expected = 2 * math.sqrt(11) / (2 * math.pi)
    ok = abs(peak - 1.06) <= 0.1 and elapsed < 30
    acceptance_report(4, ok, f"dominant peak at omega/2pi = {peak:.4f} (1.06 +- 0.1; 2 Omega_n / 2pi = "
                             f"{expected:.4f}), runtime {elapsed:.2f} s (< 30 s)")
    assert ok


def test_5_chaos_detection(acceptance_report):
    cfg = preset_cfg("fig6", "lyapunov")
    horizon = cfg.section("lyapunov")["horizon"]
    lam, times = {}, {}
    for d in (0.4, 0.8, 0.0):
        t0 = time.perf_counter()
        lam[d] = an.lyapunov_max(cfg.params.replace(delta=d), cfg.initial, horizon).lam
        times[d] = time.perf_counter() - t0
    ok = lam[0.4] > 0.01 and lam[0.8] < 0.005 and lam[0.0] < 0.002 and max(times.values()) < 300
    acceptance_report(5, ok, f"lambda(0.4) = {lam[0.4]:.4f} (> 0.01), lambda(0.8) = {lam[0.8]:.5f} (< 0.005), "
                             f"lambda(0) = {lam[0.0]:.5f} (< 0.002), horizon {horizon:g}, "
                             f"slowest point {max(times.values()):.1f} s (< 300 s)")
    assert ok


def test_6_quantitative_lambda(acceptance_report):
    cfg = preset_cfg("fig9", "lyapunov")
    p, ic = cfg.params, cfg.initial
    lam = an.lyapunov_max(p, ic, cfg.section("lyapunov")["horizon"]).lam
    rates = {dd: an.fidelity_decay(p, ic, dd, horizon=1000.0).separation_rate for dd in (1e-5, 1e-4, 1e-3)}
    r4 = rates[1e-4]
    within = 0.5 <= r4 / lam <= 2.0
    stable = all(0.5 <= r / lam <= 2.0 for r in rates.values()) and max(rates.values()) / min(rates.values()) <= 1.5
    ok = 0.02 <= lam <= 0.08 and within and stable
    acceptance_report(6, ok, f"lambda = {lam:.4f} (in [0.02, 0.08]); fidelity separation rate "
                      + ", ".join(f"{r:.4f} @ {dd:g}" for dd, r in rates.items())
                      + f"; ratio to lambda at 1e-4 = {r4 / lam:.2f} (in [0.5, 2]); "
                        f"spread max/min = {max(rates.values()) / min(rates.values()):.2f} (<= 1.5)")
    assert ok


def test_7_regular_fidelity(acceptance_report):
    p, ic = coherent(0.0)
    res = an.fidelity_decay(p, ic, 1e-4, horizon=500.0)
    fmin = float(res.series.values.min())
    lam = an.lyapunov_max(p, ic, 1e5).lam
    ok = fmin > 0.99 and lam < 0.005
    acceptance_report(7, ok, f"min f on [0, 500] = {fmin:.7f} (> 0.99), lambda = {lam:.5f} (< 0.005)")
    assert ok


def test_8_lambda_sigma_correlation(acceptance_report):
    cfg = preset_cfg("fig5", "sweep")
    opt = cfg.section("sweep")
    grid = np.round(np.arange(-20, 21) / 10, 12)
    t0 = time.perf_counter()
    rows = an.detuning_sweep(grid, cfg.params, cfg.initial, opt["horizon"],
                             (opt["window_min"], opt["window_max"]), opt["sample_dt"],
                             opt["flatness_threshold"], opt["f_max"], workers=None)
    elapsed = time.perf_counter() - t0
    chaotic = {r.delta for r in rows if r.lam > 0.01}
    irregular = {r.delta for r in rows if r.irregular}
    J = an.jaccard(chaotic, irregular)
    bound = max((abs(d) for d in chaotic | irregular), default=0.0)
    failed = sum(not (math.isfinite(r.lam) and math.isfinite(r.sigma_P)) for r in rows)
    ok = J > 0.5 and bound <= 1.2 + 1e-9 and failed == 0 and elapsed < 600
    acceptance_report(8, ok, f"Jaccard = {J:.3f} (> 0.5), |{{lambda > 0.01}}| = {len(chaotic)}, "
                             f"|irregular| = {len(irregular)}, max |delta| in either = {bound:.1f} (<= 1.2), "
                             f"failed rows {failed}, horizon {opt['horizon']:g}, runtime {elapsed:.0f} s (< 600 s)")
    assert ok


def test_9_fractal_refinement(acceptance_report):
    p, ic = fock_excited(0.4)
    budget = 15 * 60 * 8 / min(8, CORES)
    t0 = time.perf_counter()
    main = an.fractal_refinement((45.9, 46.9), p, ic, (1000, 10000, 100000), tau_max=1e4, workers=None)
    control = an.fractal_refinement((10.0, 11.0), p, ic, (20, 60, 200), tau_max=1e4, workers=None)
    elapsed = time.perf_counter() - t0
    no_growth = len(set(control.counts)) == 1
    ok = main.strictly_increasing and no_growth and elapsed < budget
    acceptance_report(9, ok, f"segments {main.counts} over {main.sizes} points (strictly increasing), "
                             f"control [10, 11] {control.counts} over {control.sizes} (no growth), "
                             f"runtime {elapsed:.0f} s on {CORES} core(s) (budget {budget:.0f} s)")
    assert ok


def test_10_predictability_horizon(acceptance_report):
    cfg = preset_cfg("fig4", "maps")
    opt = cfg.section("maps")
    t0 = time.perf_counter()
    grid = np.linspace(opt["grid_min"], opt["grid_max"], opt["points"])
    rows = np.array(an.inversion_map(grid, cfg.params, cfg.initial, opt["tau_snap"], opt["phase"], workers=None))
    elapsed = time.perf_counter() - t0
    tv100, tv200 = an.total_variation(rows[:, 1]), an.total_variation(rows[:, 2])
    ratio = tv200 / tv100
    ok = ratio > 5 and elapsed < 300
    acceptance_report(10, ok, f"TV(z_out) at tau=100: {tv100:.2f}, at tau=200: {tv200:.2f}, ratio {ratio:.2f} (> 5), "
                              f"{opt['points']} points, p0 = {cfg.initial.p0:g}, runtime {elapsed:.1f} s (< 300 s)")
    assert ok


def test_11_oracle_convergence(acceptance_report):
    N = 12
    a = np.zeros(N + 1, complex)
    b = np.zeros(N + 1, complex)
    a[10], b[10] = math.sqrt(0.8), math.sqrt(0.2)
    s0 = QCState(0.0, 0.0, 25.0, 0.0, a, b)
    errs = {}
    for d in (32.0, 100.0, 320.0):
        p = SystemParams(delta=d)
        # 50 samples per fast period; envelopes over one period
        tr = integrate(s0, p, 50.0, sample_dt=2 * math.pi / d / 50)
        u, v, z = tr.bloch()
        op = orc.OracleParams.from_rung(10, u[0, 10], v[0, 10], z[0, 10], p0=25.0, delta=d)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", orc.RegimeWarning)
            ref = orc.approx_zn_fast_or_detuned(op, tr.x, tr.tau, regime="detuned")
        w = 51
        hi_n, lo_n = obs.running_envelope(z[:, 10], w)
        hi_o, lo_o = obs.running_envelope(ref, w)
        core = slice(w, -w)
        errs[d] = float(max(np.max(np.abs(hi_n - hi_o)[core]), np.max(np.abs(lo_n - lo_o)[core])))
    e = list(errs.values())
    ok = e[0] > e[1] > e[2]
    acceptance_report(11, ok, "envelope error " + ", ".join(f"{v:.2e} @ delta={d:g}" for d, v in errs.items())
                      + " (strictly decreasing)")
    assert ok


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v", "-s"]))
