"""Chaos quantifiers and experiment drivers.

Drivers take an :class:`~atomwalk.model.InitialCondition` so that each grid
point can rebuild its own initial state.  Grid points are independent;
``workers > 1`` farms them out to a process pool and the results always
come back in grid order.
"""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _integrator as _core
from . import observables as obs
from .dynamics import IntegrationError, StepController, integrate, pack
from .model import AtomInit, InitialCondition, SystemParams

__all__ = [
    "LyapunovError",
    "LyapunovResult",
    "FidelityResult",
    "SweepRow",
    "ScatterRecord",
    "FractalResult",
    "lyapunov_max",
    "fidelity_decay",
    "spectral_flatness",
    "detuning_sweep",
    "jaccard",
    "scattering_scan",
    "position_map",
    "inversion_map",
    "predictability_horizon",
    "count_monotone_segments",
    "total_variation",
    "fractal_refinement",
    "parallel_map",
    "write_rows_csv",
]

LEFT_NODE = -0.5 * math.pi
RIGHT_NODE = 1.5 * math.pi


class LyapunovError(IntegrationError):
    """Separation collapsed or blew up between renormalizations."""


def parallel_map(fn, items, workers: int | None = 1):
    """``[fn(i) for i in items]`` with an optional process pool.

    ``workers=None`` means one per available core.  Output order always
    follows ``items``.
    """
    items = list(items)
    if workers is None:
        workers = len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else os.cpu_count()
    workers = max(1, min(int(workers), len(items) or 1))
    if workers == 1:
        return [fn(i) for i in items]
    chunk = max(1, len(items) // (8 * workers))
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items, chunksize=chunk))


def _form_code(form):
    return _core.BLOCH if form == "bloch" else _core.AMPLITUDE


# --------------------------------------------------------------------------
# Lyapunov exponent
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class LyapunovResult:
    """Maximal Lyapunov exponent with its convergence record.

    ``lam`` is clamped at zero; the unclamped estimate is ``raw``.
    ``spread`` is the peak-to-peak range of the running estimate over the
    last quarter of the horizon and ``stderr`` a batch-means error of
    ``raw``.
    """

    lam: float
    raw: float
    curve_tau: np.ndarray
    curve_lambda: np.ndarray
    renorm_interval: float
    horizon: float
    d0: float
    spread: float
    stderr: float
    meta: dict = field(default_factory=dict)

    @property
    def clamped(self) -> bool:
        return self.raw < 0


def lyapunov_max(params: SystemParams, init, horizon: float = 1e5, renorm_interval: float = 1.0,
                 d0: float = 1e-8, form: str = "bloch", n_batches: int = 10) -> LyapunovResult:
    """Two-trajectory (Benettin) estimate over the active rungs.

    ``init`` is an :class:`InitialCondition` or a ready state.  The
    companion trajectory starts ``d0`` away along the unit diagonal of the
    packed phase-space vector and is rescaled back to ``d0`` every
    ``renorm_interval``.
    """
    if not 1e-9 <= d0 <= 1e-6:
        raise ValueError("d0 must lie in [1e-9, 1e-6]")
    if not (horizon > 0 and renorm_interval > 0):
        raise ValueError("horizon and renorm_interval must be positive")
    s0 = init.build(params) if isinstance(init, InitialCondition) else init
    y0, rungs, g = pack(s0, form)
    n_renorm = int(round(horizon / renorm_interval))
    if n_renorm < 1:
        raise ValueError("horizon shorter than one renormalization interval")
    logs, status = _core.benettin(_form_code(form), y0, d0, renorm_interval, n_renorm,
                                  params.rel_tol, params.abs_tol, params.omega_r, params.delta, g)
    if status != _core.OK or logs.size < n_renorm:
        raise LyapunovError(
            f"separation failure after {logs.size * renorm_interval:g} time units (status {status})")
    tau = renorm_interval * np.arange(1, n_renorm + 1)
    curve = np.cumsum(logs) / tau
    raw = float(curve[-1])
    tail = curve[3 * n_renorm // 4:]
    spread = float(tail.max() - tail.min()) if tail.size else 0.0
    nb = min(n_batches, n_renorm)
    batches = np.array([b.sum() for b in np.array_split(logs, nb)]) / (horizon / nb)
    stderr = float(batches.std(ddof=1) / math.sqrt(nb)) if nb > 1 else math.inf
    return LyapunovResult(
        lam=max(raw, 0.0), raw=raw, curve_tau=tau, curve_lambda=curve,
        renorm_interval=renorm_interval, horizon=float(n_renorm * renorm_interval), d0=d0,
        spread=spread, stderr=stderr,
        meta={"form": form, "dimension": int(y0.size), "rungs": rungs.tolist(),
              "delta": params.delta, "rel_tol": params.rel_tol, "abs_tol": params.abs_tol},
    )


# --------------------------------------------------------------------------
# fidelity
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class FidelityResult:
    series: obs.TimeSeries
    rate: float
    fit_end: float
    delta_delta: float
    meta: dict = field(default_factory=dict)

    @property
    def separation_rate(self) -> float:
        """Half the fitted slope.  ``1 - f`` is quadratic in the distance
        between the twin states, so this is the rate at which that distance
        grows, the quantity comparable with a Lyapunov exponent."""
        return 0.5 * self.rate

    @property
    def log10_infidelity(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log10(np.clip(1.0 - self.series.values, 0.0, None))


def fidelity_decay(params: SystemParams, init, delta_delta: float = 1e-4, horizon: float = 1000.0,
                   sample_dt: float = 0.1, fit_level: float = -0.5, floor: float = 1e-13) -> FidelityResult:
    """Overlap of twin states evolved under ``delta`` and ``delta + delta_delta``.

    The rate is the least-squares slope of ``ln(1 - f)`` from ``tau = 0``
    up to the first sample where ``log10(1 - f)`` reaches ``fit_level``
    (the whole series if it never does).  Samples with ``1 - f`` below
    ``floor`` are round-off and left out of the fit.  ``rate`` is nan when
    fewer than three samples remain.
    """
    s0 = init.build(params) if isinstance(init, InitialCondition) else init
    ctrl = StepController.from_params(params)
    t1 = integrate(s0, params, horizon, ctrl, sample_dt, form="amplitude")
    t2 = integrate(s0, params.replace(delta=params.delta + delta_delta), horizon, ctrl,
                   sample_dt, form="amplitude")
    f = obs.fidelity_series(t1, t2)
    f[0] = 1.0
    series = obs.TimeSeries(float(t1.tau[0]), sample_dt, f)
    loss = 1.0 - f
    hit = np.flatnonzero(loss >= 10 ** fit_level)
    end = hit[0] if hit.size else loss.size - 1
    sel = np.arange(end + 1)
    sel = sel[loss[sel] > floor]
    if sel.size >= 3:
        rate = float(np.polyfit(t1.tau[sel], np.log(loss[sel]), 1)[0])
    else:
        rate = math.nan
    return FidelityResult(series, rate, float(t1.tau[end]), delta_delta,
                          meta={"fit_samples": int(sel.size), "reached_level": bool(hit.size),
                                "steps": (t1.stats["steps"], t2.stats["steps"])})


# --------------------------------------------------------------------------
# detuning sweep
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SweepRow:
    delta: float
    lam: float
    sigma_P: float
    flatness: float
    irregular: bool
    meta: dict = field(default_factory=dict)


def spectral_flatness(series: obs.TimeSeries, f_max: float | None = 1.0) -> float:
    """Geometric over arithmetic mean of the Hann-windowed power spectrum,
    DC excluded, up to ``f_max`` (cycles per unit time).

    Close to 0 for a few sharp lines, larger for a broadband signal.
    """
    freqs, mag = obs.power_spectrum(series)
    sel = freqs > 0
    if f_max is not None:
        sel &= freqs <= f_max
    pw = mag[sel] ** 2
    if not np.any(pw > 0):
        return 0.0
    tiny = np.finfo(float).tiny
    return float(np.exp(np.mean(np.log(pw + tiny))) / np.mean(pw))


def _sweep_point(job):
    delta, params, init, horizon, window, sample_dt, threshold, f_max = job
    pr = params.replace(delta=float(delta))
    meta = {}
    try:
        ly = lyapunov_max(pr, init, horizon)
        lam, meta["lambda_raw"], meta["lambda_stderr"] = ly.lam, ly.raw, ly.stderr
    except IntegrationError as exc:
        lam, meta["error_lambda"] = math.nan, str(exc)
    try:
        tr = integrate(init.build(pr), pr, window[1], sample_dt=sample_dt, form="amplitude")
        series = obs.TimeSeries.from_samples(tr.tau, obs.purity(tr)).window(*window)
        sig = obs.purity_variance(series)
        flat = spectral_flatness(series, f_max)
    except IntegrationError as exc:
        sig, flat, meta["error_purity"] = math.nan, math.nan, str(exc)
    return SweepRow(float(delta), lam, sig, flat, bool(flat > threshold), meta)


def detuning_sweep(delta_grid, params_base: SystemParams, init: InitialCondition,
                   horizon: float = 1e4, window=(0.0, 1000.0), sample_dt: float = 0.1,
                   flatness_threshold: float = 0.2, f_max: float | None = 1.0,
                   workers: int | None = 1) -> list[SweepRow]:
    """lambda and sigma_P for every detuning in ``delta_grid``.

    Purity comes from an amplitude-form run over ``window``; a row is
    flagged irregular when the spectral flatness of that series exceeds
    ``flatness_threshold``.  Failures leave nan in the row and the error
    text in ``meta``.
    """
    jobs = [(d, params_base, init, horizon, tuple(window), sample_dt, flatness_threshold, f_max)
            for d in delta_grid]
    return parallel_map(_sweep_point, jobs, workers)


def jaccard(a, b) -> float:
    a, b = set(a), set(b)
    if not a and not b:
        return 1.0
    return len(a & b) / len(a | b)


# --------------------------------------------------------------------------
# scattering and maps
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ScatterRecord:
    """Outcome of one launch from ``x0``.  When ``timed_out`` is set, ``T``
    equals the timeout and ``x_exit`` / ``z_out`` are the values there."""

    p0: float
    T: float
    m: int
    x_exit: float
    z_out: float
    timed_out: bool


def _scatter_point(job):
    p0, params, init, tau_max, p_hyst, t_tol = job
    s0 = init.replace(p0=float(p0)).build(params)
    y0, rungs, g = pack(s0, "bloch")
    K = rungs.size
    T, m, xe, z, to, st = _core.exit_time(
        _core.BLOCH, y0, LEFT_NODE, RIGHT_NODE, tau_max, p_hyst, 2 + 2 * K, K,
        abs(s0.b0) ** 2, t_tol, params.rel_tol, params.abs_tol, params.omega_r, params.delta, g)
    if st != _core.OK:
        raise IntegrationError(f"scattering run p0={p0} failed (status {st})")
    return ScatterRecord(float(p0), float(T), int(m), float(xe), float(z), bool(to))


def scattering_scan(p0_grid, params: SystemParams, init: InitialCondition, tau_max: float = 1e4,
                    p_hyst: float = 0.1, t_tol: float = 1e-6, workers: int | None = 1) -> list[ScatterRecord]:
    """Exit time and turn count for launches at every ``p0``.

    The atom leaves when x reaches -pi/2 or 3pi/2; the crossing is bisected
    on the dense output to ``t_tol``.  A turn is counted when p changes
    sign and then exceeds ``p_hyst`` in magnitude.
    """
    if not (LEFT_NODE < init.x0 < RIGHT_NODE):
        raise ValueError("launch point must lie between the exit nodes")
    jobs = [(p, params, init, float(tau_max), p_hyst, t_tol) for p in p0_grid]
    return parallel_map(_scatter_point, jobs, workers)


def _snapshots(s0, params, taus):
    """Packed Bloch states at each of the increasing times ``taus``."""
    y, rungs, g = pack(s0, "bloch")
    code = _core.BLOCH
    f = _core.rhs(code, y, params.omega_r, params.delta, g)
    work = _core.make_work(y.size)
    h = _core.initial_step(code, y, f, params.omega_r, params.delta, g,
                           params.rel_tol, params.abs_tol, taus[-1])
    t, out = 0.0, []
    for tau in taus:
        t, h, _, st = _core.advance_to(code, t, y, f, h, float(tau), params.rel_tol, params.abs_tol,
                                       np.inf, params.omega_r, params.delta, g, work)
        if st != _core.OK:
            raise IntegrationError(f"integration failed before tau={tau} (status {st})")
        out.append(y.copy())
    return out, rungs.size


def _position_point(job):
    p0, params, init, taus = job
    snaps, _ = _snapshots(init.replace(p0=float(p0)).build(params), params, taus)
    return (float(p0),) + tuple(float(y[0]) for y in snaps)


def position_map(p0_grid, params: SystemParams, init: InitialCondition, tau_snap,
                 workers: int | None = 1) -> list[tuple]:
    """Rows ``(p0, x(tau_1), x(tau_2), ...)`` for increasing snapshot times."""
    taus = _as_times(tau_snap)
    return parallel_map(_position_point, [(p, params, init, taus) for p in p0_grid], workers)


def _inversion_point(job):
    zin, params, init, taus, phase = job
    s0 = init.replace(atom=AtomInit.from_inversion(float(zin), phase)).build(params)
    snaps, K = _snapshots(s0, params, taus)
    b02 = abs(s0.b0) ** 2
    return (float(zin),) + tuple(float(y[2 + 2 * K:].sum() - b02) for y in snaps)


def inversion_map(zin_grid, params: SystemParams, init: InitialCondition, tau_snap,
                  phase: float = 0.0, workers: int | None = 1) -> list[tuple]:
    """Rows ``(z_in, z(tau_1), ...)``; the atom of ``init`` is replaced by
    one with inversion ``z_in`` and relative phase ``phase``."""
    taus = _as_times(tau_snap)
    return parallel_map(_inversion_point, [(z, params, init, taus, phase) for z in zin_grid], workers)


def _as_times(tau_snap):
    taus = np.atleast_1d(np.asarray(tau_snap, dtype=float))
    if np.any(taus <= 0) or np.any(np.diff(taus) <= 0):
        raise ValueError("snapshot times must be positive and increasing")
    return taus


def predictability_horizon(lam: float, dx: float, dx0: float) -> float:
    """ln(dx / dx0) / lam; infinite for lam <= 0."""
    if not (dx0 > 0 and dx >= dx0):
        raise ValueError("need dx >= dx0 > 0")
    if lam <= 0:
        return math.inf
    return math.log(dx / dx0) / lam


# --------------------------------------------------------------------------
# fractal refinement
# --------------------------------------------------------------------------

def count_monotone_segments(values) -> int:
    """Number of maximal monotone runs; flat steps join the current run."""
    d = np.sign(np.diff(np.asarray(values, dtype=float)))
    d = d[d != 0]
    if d.size == 0:
        return 1
    return int(1 + np.count_nonzero(d[1:] != d[:-1]))


def total_variation(values) -> float:
    return float(np.sum(np.abs(np.diff(np.asarray(values, dtype=float)))))


@dataclass(frozen=True)
class FractalResult:
    window: tuple
    sizes: tuple
    counts: tuple
    records: list

    @property
    def growth(self) -> tuple:
        return tuple(b / a for a, b in zip(self.counts, self.counts[1:]))

    @property
    def strictly_increasing(self) -> bool:
        return all(b > a for a, b in zip(self.counts, self.counts[1:]))


def fractal_refinement(window, params: SystemParams, init: InitialCondition,
                       levels=(1000, 10000, 100000), tau_max: float = 1e4,
                       workers: int | None = 1) -> FractalResult:
    """Monotone-segment count of T(p0) on successively finer grids over
    ``window``.  ``records[k]`` holds the scan of level ``k``."""
    lo, hi = map(float, window)
    counts, records = [], []
    for n in levels:
        recs = scattering_scan(np.linspace(lo, hi, int(n)), params, init, tau_max, workers=workers)
        counts.append(count_monotone_segments([r.T for r in recs]))
        records.append(recs)
    return FractalResult((lo, hi), tuple(int(n) for n in levels), tuple(counts), records)


# --------------------------------------------------------------------------
# output
# --------------------------------------------------------------------------

def write_rows_csv(path, columns, rows, header: dict | None = None, digits: int = 12):
    """Generic CSV writer; floats get ``digits`` significant digits and
    ``header`` items go first as ``# key = value`` lines."""
    fmt = f"{{:.{digits}g}}"

    def cell(v):
        if isinstance(v, (bool, np.bool_)):
            return int(v)
        if isinstance(v, (float, np.floating)):
            return fmt.format(v)
        return v

    with open(path, "w", newline="") as fh:
        for k, v in (header or {}).items():
            fh.write(f"# {k} = {v}\n")
        w = csv.writer(fh)
        w.writerow(columns)
        for row in rows:
            w.writerow([cell(v) for v in row])
