"""Inversion, purity, entropies, fidelity and time-series diagnostics.

Every state function accepts a :class:`~atomwalk.model.QCState`, a
:class:`~atomwalk.model.BlochState` or a whole
:class:`~atomwalk.dynamics.Trajectory` (returning one value per sample).
Bloch-form inputs carry no phases, so purity and entropies are only
available from them when the atom-field coherence involves a single
photon number, which is the case for any Fock-state field.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import ndimage, signal

from .dynamics import Trajectory
from .model import BlochState, QCState

__all__ = [
    "ReducedSummary",
    "TimeSeries",
    "inversion",
    "reduced_summary",
    "purity",
    "linear_entropy",
    "von_neumann_entropy",
    "fock_purity",
    "fidelity",
    "fidelity_series",
    "purity_variance",
    "power_spectrum",
    "autocorrelation_period",
    "running_envelope",
    "write_series_csv",
    "write_spectrum_csv",
]

RADICAND_TOL = 1e-10


@dataclass(frozen=True)
class ReducedSummary:
    """Populations ``A`` (excited), ``B`` (ground) and coherence ``C`` of
    the reduced atomic density matrix.  Arrays for trajectories."""

    A: np.ndarray | float
    B: np.ndarray | float
    C: np.ndarray | complex

    @property
    def abs_C2(self):
        return np.abs(self.C) ** 2


@dataclass(frozen=True)
class TimeSeries:
    t0: float
    dt: float
    values: np.ndarray

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        vals = np.asarray(self.values, dtype=float)
        if not np.all(np.isfinite(vals)):
            raise ValueError("time series contains non-finite values")
        object.__setattr__(self, "values", vals)

    def __len__(self):
        return self.values.size

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.values.size)

    @classmethod
    def from_samples(cls, tau, values) -> "TimeSeries":
        tau = np.asarray(tau, dtype=float)
        dt = float(tau[1] - tau[0])
        if not np.allclose(np.diff(tau), dt, rtol=1e-9, atol=1e-12):
            raise ValueError("samples are not uniformly spaced")
        return cls(float(tau[0]), dt, values)

    def window(self, t_min=None, t_max=None) -> "TimeSeries":
        t = self.times
        mask = np.ones(t.size, bool)
        if t_min is not None:
            mask &= t >= t_min - 1e-9 * self.dt
        if t_max is not None:
            mask &= t <= t_max + 1e-9 * self.dt
        idx = np.flatnonzero(mask)
        if idx.size == 0:
            raise ValueError("window contains no samples")
        return TimeSeries(float(t[idx[0]]), self.dt, self.values[idx])


# --------------------------------------------------------------------------
# state functions
# --------------------------------------------------------------------------

def inversion(s):
    if isinstance(s, QCState):
        return float(np.sum(np.abs(s.a) ** 2) - np.sum(np.abs(s.b) ** 2) - abs(s.b0) ** 2)
    if isinstance(s, BlochState):
        return float(np.sum(s.z) - s.b0_mag2)
    if isinstance(s, Trajectory):
        _, _, z = s.bloch()
        return z.sum(axis=1) - np.abs(s.b0) ** 2
    raise TypeError(f"unsupported state type {type(s).__name__}")


def _coherence_bloch(R, z, b0_mag2):
    """|C|^2 from moduli alone.  ``R`` and ``z`` are (..., N+1) arrays.

    C = sum_n a_n conj(b_n) pairs rung n (a_n) with rung n-1 (b_n), or with
    b_0 for n = 0; when at most one such pair is occupied |C|^2 is the
    product of the two moduli.
    """
    R = np.asarray(R)
    occ = R.reshape(-1, R.shape[-1]).max(axis=0) > 0
    b0_occ = np.max(b0_mag2) > 0
    pairs = [n for n in range(occ.size) if occ[n] and (occ[n - 1] if n > 0 else b0_occ)]
    if len(pairs) > 1:
        raise ValueError(
            "coherence depends on phases across several rungs; integrate in amplitude form")
    if not pairs:
        return np.zeros(R.shape[:-1]) if R.ndim > 1 else 0.0
    n = pairs[0]
    a2 = (R[..., n] + z[..., n]) / 2
    b2 = (R[..., n - 1] - z[..., n - 1]) / 2 if n > 0 else b0_mag2
    return a2 * b2


def reduced_summary(s) -> ReducedSummary:
    if isinstance(s, QCState):
        A = float(np.sum(np.abs(s.a) ** 2))
        B = float(np.sum(np.abs(s.b) ** 2) + abs(s.b0) ** 2)
        C = complex(np.sum(s.excited_ladder() * np.conj(s.ground_ladder())))
        return ReducedSummary(A, B, C)
    if isinstance(s, Trajectory) and s.form == "amplitude":
        a, b = s.amplitudes()
        A = np.sum(np.abs(a) ** 2, axis=1)
        B = np.sum(np.abs(b) ** 2, axis=1) + np.abs(s.b0) ** 2
        # a_n conj(b_n): b_n is stored one slot down, b_0 separately
        C = a[:, 0] * np.conj(s.b0) + np.sum(a[:, 1:] * np.conj(b[:, :-1]), axis=1)
        return ReducedSummary(A, B, C)
    if isinstance(s, BlochState):
        R, z, b02 = s.R, s.z, s.b0_mag2
    elif isinstance(s, Trajectory):
        u, v, z = s.bloch()
        R = np.sqrt(u * u + v * v + z * z)
        b02 = np.abs(s.b0) ** 2
    else:
        raise TypeError(f"unsupported state type {type(s).__name__}")
    A = np.sum((R + z) / 2, axis=-1)
    B = np.sum((R - z) / 2, axis=-1) + b02
    # only |C| is meaningful here
    C = np.sqrt(_coherence_bloch(R, z, b02)) + 0j
    if np.ndim(A) == 0:
        return ReducedSummary(float(A), float(B), complex(C))
    return ReducedSummary(A, B, C)


def purity(s):
    """Tr(rho_a^2) = A^2 + B^2 + 2|C|^2."""
    r = reduced_summary(s)
    return r.A ** 2 + r.B ** 2 + 2 * r.abs_C2


def linear_entropy(s):
    return 1 - purity(s)


def _radicand(r: ReducedSummary):
    rad = 0.25 + r.abs_C2 - r.A * r.B
    bad = (rad < -RADICAND_TOL) | (rad > 0.25 + RADICAND_TOL)
    if np.any(bad):
        warnings.warn(f"eigenvalue radicand outside [0, 1/4] by more than {RADICAND_TOL:g}; clamped",
                      RuntimeWarning, stacklevel=3)
    return np.clip(rad, 0.0, 0.25)


def von_neumann_entropy(s):
    r = reduced_summary(s)
    root = np.sqrt(_radicand(r))
    lam = np.stack([0.5 + root, 0.5 - root])
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(lam > 0, -lam * np.log(np.where(lam > 0, lam, 1.0)), 0.0)
    out = terms.sum(axis=0)
    return float(out) if np.ndim(out) == 0 else out


def fock_purity(z_nm1, z_n, R_nm1, R_n):
    """Purity of a two-rung (Fock-field) state from inversions and rung norms."""
    return 0.5 * (1 + (z_n + z_nm1) ** 2 + (R_n + z_n) * (R_nm1 - z_nm1))


def fidelity(s1: QCState, s2: QCState) -> float:
    """Squared overlap ``|<s1|s2>|^2``."""
    if s1.a.shape != s2.a.shape:
        raise ValueError(f"truncation mismatch: {s1.n_trunc} vs {s2.n_trunc}")
    ov = np.vdot(s1.a, s2.a) + np.vdot(s1.b, s2.b) + np.conj(s1.b0) * s2.b0
    return float(min(abs(ov) ** 2, 1.0))


def fidelity_series(t1: Trajectory, t2: Trajectory) -> np.ndarray:
    """Squared overlap of two amplitude-form trajectories, sample by sample,
    divided by the product of their norms."""
    if t1.n_trunc != t2.n_trunc or t1.tau.shape != t2.tau.shape:
        raise ValueError("trajectories differ in truncation or sampling")
    a1, b1 = t1.amplitudes()
    a2, b2 = t2.amplitudes()
    ov = (np.sum(np.conj(a1) * a2, axis=1) + np.sum(np.conj(b1) * b2, axis=1)
          + np.conj(t1.b0) * t2.b0)
    # normalized so integrator norm drift does not show up as infidelity
    n1 = np.sum(np.abs(a1) ** 2 + np.abs(b1) ** 2, axis=1) + np.abs(t1.b0) ** 2
    n2 = np.sum(np.abs(a2) ** 2 + np.abs(b2) ** 2, axis=1) + np.abs(t2.b0) ** 2
    return np.minimum(np.abs(ov) ** 2 / (n1 * n2), 1.0)


# --------------------------------------------------------------------------
# series diagnostics
# --------------------------------------------------------------------------

def purity_variance(series: TimeSeries, t_min=None, t_max=None) -> float:
    """Root-mean-square deviation of the series over ``[t_min, t_max]``."""
    vals = series.window(t_min, t_max).values
    if vals.size < 2:
        raise ValueError("need at least two samples")
    m = vals.mean()
    return float(math.sqrt(max(np.mean(vals * vals) - m * m, 0.0)))


def power_spectrum(series: TimeSeries, window: str | None = "hann"):
    """One-sided amplitude spectrum of the mean-subtracted series.

    Frequencies are cycles per unit time, i.e. ``omega / 2 pi``.  The
    magnitude is scaled so a unit-amplitude tone that falls on a bin reads
    about 1.
    """
    x = series.values
    if x.size < 64:
        raise ValueError("power spectrum needs at least 64 samples")
    x = x - x.mean()
    w = np.ones(x.size) if window is None else signal.get_window(window, x.size, fftbins=False)
    spec = np.fft.rfft(x * w)
    freqs = np.fft.rfftfreq(x.size, series.dt)
    mag = 2 * np.abs(spec) / w.sum()
    return freqs, mag


def autocorrelation_period(series: TimeSeries, min_lag: float = 0.0, rel_height: float = 0.9) -> float:
    """Lag of the first autocorrelation peak beyond ``min_lag`` that reaches
    ``rel_height`` of the highest one, refined by a parabola through the
    three samples around it.  Taking the first rather than the highest
    keeps multiples of the period from winning on round-off."""
    x = series.values - series.values.mean()
    n = x.size
    nfft = 1 << (2 * n - 1).bit_length()
    spec = np.fft.rfft(x, nfft)
    ac = np.fft.irfft(spec * np.conj(spec), nfft)[:n]
    ac /= (n - np.arange(n))  # unbiased
    ac /= ac[0]
    start = max(1, int(math.ceil(min_lag / series.dt)))
    # ignore the far tail where few products remain
    stop = n - n // 4
    peaks, _ = signal.find_peaks(ac[start:stop])
    if peaks.size == 0:
        raise ValueError("no autocorrelation peak found")
    h = ac[start:stop][peaks]
    k = start + peaks[np.argmax(h >= rel_height * h.max())]
    y0, y1, y2 = ac[k - 1], ac[k], ac[k + 1]
    denom = y0 - 2 * y1 + y2
    shift = 0.5 * (y0 - y2) / denom if denom != 0 else 0.0
    return float((k + shift) * series.dt)


def running_envelope(values, width: int):
    """Upper and lower envelopes as running max/min over ``width`` samples
    (centered; edges use the samples available)."""
    values = np.asarray(values, dtype=float)
    if width < 1:
        raise ValueError("width must be >= 1")
    return ndimage.maximum_filter1d(values, width, mode="nearest"), \
        ndimage.minimum_filter1d(values, width, mode="nearest")


def write_series_csv(series: TimeSeries, path, header: dict | None = None, digits: int = 12):
    fmt = f"{{:.{digits}g}}"
    with open(path, "w", newline="") as fh:
        for k, v in (header or {}).items():
            fh.write(f"# {k} = {v}\n")
        w = csv.writer(fh)
        w.writerow(["tau", "value"])
        for t, v in zip(series.times, series.values):
            w.writerow([fmt.format(t), fmt.format(v)])


def write_spectrum_csv(freqs, mags, path, header: dict | None = None, digits: int = 12):
    fmt = f"{{:.{digits}g}}"
    with open(path, "w", newline="") as fh:
        for k, v in (header or {}).items():
            fh.write(f"# {k} = {v}\n")
        w = csv.writer(fh)
        w.writerow(["freq", "magnitude"])
        for f, m in zip(freqs, mags):
            w.writerow([fmt.format(f), fmt.format(m)])
