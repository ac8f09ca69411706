"""Equations of motion, adaptive integration and invariant monitors."""

from __future__ import annotations

import cmath
import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import _integrator as _core
from .model import BlochState, QCState, SystemParams, bloch_from_amplitudes

__all__ = [
    "IntegrationError",
    "StepUnderflowError",
    "LeakageError",
    "InvariantDriftError",
    "AmplitudeDerivative",
    "BlochDerivative",
    "StepController",
    "Trajectory",
    "rhs_amplitude",
    "rhs_bloch",
    "rhs_fock",
    "integrate",
    "integral_R",
    "total_energy",
    "b0_exact",
    "write_trajectory_csv",
]


class IntegrationError(RuntimeError):
    """Numerical failure while integrating a trajectory."""


class StepUnderflowError(IntegrationError):
    pass


class LeakageError(IntegrationError):
    pass


class InvariantDriftError(IntegrationError):
    pass


@dataclass(frozen=True)
class AmplitudeDerivative:
    dx: float
    dp: float
    db0: complex
    da: np.ndarray
    db: np.ndarray


@dataclass(frozen=True)
class BlochDerivative:
    dx: float
    dp: float
    du: np.ndarray
    dv: np.ndarray
    dz: np.ndarray


@dataclass(frozen=True)
class StepController:
    """Step-size and monitoring knobs for :func:`integrate`.

    ``drift_factor`` scales ``rel_tol`` into the allowed drift of every
    conserved quantity before :class:`InvariantDriftError` is raised; for
    the energy the limit is further multiplied by
    ``max(1, |E(0)|, omega_r p(0)^2 / 2)``.
    Amplitude-form runs step with both tolerances multiplied by
    ``amplitude_tol_scale``: those variables carry the fast ``delta/2``
    phase and, at equal tolerance, lose norm (and hence energy, which
    weighs the inversion by ``delta/2``) an order of magnitude faster than
    the Bloch variables.  The drift limit is not scaled.
    """

    rel_tol: float = 1e-10
    abs_tol: float = 1e-12
    first_step: float | None = None
    min_step: float = 0.0
    max_step: float = math.inf
    monitor_every: int = 100
    drift_factor: float = 100.0
    amplitude_tol_scale: float = 0.01

    def __post_init__(self):
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise ValueError("tolerances must be positive")
        if self.min_step > self.max_step:
            raise ValueError("min_step exceeds max_step")
        if not self.amplitude_tol_scale > 0:
            raise ValueError("amplitude_tol_scale must be positive")
        if self.monitor_every < 1:
            raise ValueError("monitor_every must be >= 1")

    @classmethod
    def from_params(cls, params: SystemParams, **kw) -> "StepController":
        return cls(rel_tol=params.rel_tol, abs_tol=params.abs_tol, **kw)


def _coupling(n_trunc: int) -> np.ndarray:
    return np.sqrt(np.arange(n_trunc + 1) + 1.0)


def _check_finite(*arrays):
    for arr in arrays:
        if not np.all(np.isfinite(arr)):
            raise ValueError("non-finite state passed to right-hand side")


def rhs_amplitude(s: QCState, params: SystemParams) -> AmplitudeDerivative:
    _check_finite(s.a, s.b, [s.x, s.p, s.b0])
    g = _coupling(s.n_trunc)
    y = np.concatenate([[s.x, s.p], s.a.real, s.a.imag, s.b.real, s.b.imag])
    dy = _core.amplitude_rhs(y, params.omega_r, params.delta, g)
    K = g.size
    da = dy[2:2 + K] + 1j * dy[2 + K:2 + 2 * K]
    db = dy[2 + 2 * K:2 + 3 * K] + 1j * dy[2 + 3 * K:]
    db0 = -0.5j * params.delta * s.b0
    return AmplitudeDerivative(dy[0], dy[1], db0, da, db)


def rhs_bloch(s: BlochState, params: SystemParams) -> BlochDerivative:
    _check_finite(s.u, s.v, s.z, [s.x, s.p])
    g = _coupling(s.n_trunc)
    y = np.concatenate([[s.x, s.p], s.u, s.v, s.z])
    dy = _core.bloch_rhs(y, params.omega_r, params.delta, g)
    K = g.size
    return BlochDerivative(dy[0], dy[1], dy[2:2 + K], dy[2 + K:2 + 2 * K], dy[2 + 2 * K:])


def rhs_fock(s: BlochState, params: SystemParams, n: int) -> BlochDerivative:
    """Reduced equations for a field that started in the Fock state ``|n>``.

    Only rungs ``n-1`` and ``n`` may be occupied (just rung 0 for
    ``n = 0``); the seven equations are written out explicitly.
    """
    _check_finite(s.u, s.v, s.z, [s.x, s.p])
    allowed = {n - 1, n} if n > 0 else {0}
    occupied = set(np.flatnonzero((s.u != 0) | (s.v != 0) | (s.z != 0)).tolist())
    if not occupied <= allowed or n > s.n_trunc:
        raise ValueError(f"rungs {sorted(occupied)} populated; Fock reduction for n={n} allows {sorted(allowed)}")
    d, cx, sx = params.delta, math.cos(s.x), math.sin(s.x)
    rn1 = math.sqrt(n + 1)
    un, vn, zn = s.u[n], s.v[n], s.z[n]
    if n > 0:
        rn = math.sqrt(n)
        um, vm, zm = s.u[n - 1], s.v[n - 1], s.z[n - 1]
    else:
        rn, um, vm, zm = 0.0, 0.0, 0.0, 0.0
    du = np.zeros_like(s.u)
    dv = np.zeros_like(s.v)
    dz = np.zeros_like(s.z)
    du[n] = d * vn
    dv[n] = -d * un + 2 * rn1 * zn * cx
    dz[n] = -2 * rn1 * vn * cx
    if n > 0:
        du[n - 1] = d * vm
        dv[n - 1] = -d * um + 2 * rn * zm * cx
        dz[n - 1] = -2 * rn * vm * cx
    dp = -(rn * um + rn1 * un) * sx
    return BlochDerivative(params.omega_r * s.p, dp, du, dv, dz)


def integral_R(s, n: int) -> float:
    """Conserved norm of rung ``n``."""
    if isinstance(s, QCState):
        return float(abs(s.a[n]) ** 2 + abs(s.b[n]) ** 2)
    return float(math.sqrt(s.u[n] ** 2 + s.v[n] ** 2 + s.z[n] ** 2))


def total_energy(s, params: SystemParams) -> float:
    if isinstance(s, QCState):
        s = bloch_from_amplitudes(s)
    g = _coupling(s.n_trunc)
    return float(
        params.omega_r * s.p ** 2 / 2
        - params.delta / 2 * np.sum(s.z)
        - math.cos(s.x) * np.sum(g * s.u)
    )


def b0_exact(b0_init: complex, delta: float, tau):
    """Closed-form evolution of the ``|1, 0>`` amplitude (a pure phase)."""
    return b0_init * np.exp(-0.5j * delta * np.asarray(tau)) if np.ndim(tau) else b0_init * cmath.exp(-0.5j * delta * tau)


# --------------------------------------------------------------------------
# trajectories
# --------------------------------------------------------------------------

@dataclass
class Trajectory:
    """Uniformly sampled solution restricted to its active rungs.

    ``block`` holds the per-sample layout of the integrated form: Bloch
    ``[u, v, z]`` (3K columns) or amplitude ``[Re a, Im a, Re b, Im b]``
    (4K columns) for the rungs listed in ``rungs``.
    """

    form: str
    params: SystemParams
    n_trunc: int
    rungs: np.ndarray
    tau: np.ndarray
    x: np.ndarray
    p: np.ndarray
    block: np.ndarray
    b0: np.ndarray
    stats: dict = field(default_factory=dict)

    def __len__(self):
        return self.tau.size

    @property
    def n_active(self) -> int:
        return self.rungs.size

    def _full(self, cols, dtype=float):
        out = np.zeros((self.tau.size, self.n_trunc + 1), dtype)
        out[:, self.rungs] = cols
        return out

    def amplitudes(self) -> tuple[np.ndarray, np.ndarray]:
        """Full ladders ``a[t, n]`` and ``b[t, n] = b_{n+1}``."""
        if self.form != "amplitude":
            raise ValueError("phases are only available from amplitude-form trajectories")
        K = self.n_active
        blk = self.block
        a = blk[:, :K] + 1j * blk[:, K:2 * K]
        b = blk[:, 2 * K:3 * K] + 1j * blk[:, 3 * K:]
        return self._full(a, complex), self._full(b, complex)

    def bloch(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Full-ladder ``u, v, z`` arrays of shape ``(samples, N + 1)``."""
        K = self.n_active
        if self.form == "bloch":
            u, v, z = self.block[:, :K], self.block[:, K:2 * K], self.block[:, 2 * K:]
        else:
            a, b = self.amplitudes()
            a, b = a[:, self.rungs], b[:, self.rungs]
            w = a * np.conj(b)
            u, v, z = 2 * w.real, -2 * w.imag, np.abs(a) ** 2 - np.abs(b) ** 2
        return self._full(u), self._full(v), self._full(z)

    def rung_norms(self) -> np.ndarray:
        u, v, z = self.bloch()
        if self.form == "bloch":
            return np.sqrt(u * u + v * v + z * z)
        a, b = self.amplitudes()
        return np.abs(a) ** 2 + np.abs(b) ** 2

    def energy(self) -> np.ndarray:
        u, _, z = self.bloch()
        g = _coupling(self.n_trunc)
        pr = self.params
        return pr.omega_r * self.p ** 2 / 2 - pr.delta / 2 * z.sum(axis=1) - np.cos(self.x) * (u @ g)

    def state(self, i: int):
        """Sample ``i`` as a :class:`QCState` (amplitude form) or
        :class:`BlochState`."""
        if self.form == "amplitude":
            a, b = self.amplitudes()
            return QCState(self.tau[i], self.x[i], self.p[i], self.b0[i], a[i], b[i])
        u, v, z = self.bloch()
        R = np.sqrt(u[i] ** 2 + v[i] ** 2 + z[i] ** 2)
        return BlochState(self.tau[i], self.x[i], self.p[i], u[i], v[i], z[i], R, abs(self.b0[i]) ** 2)


def _active_rungs(R: np.ndarray) -> np.ndarray:
    return np.flatnonzero(R > 0)


def pack(s, form: str, all_rungs: bool = False):
    """Flatten a state into the jitted layout over its occupied rungs (or
    over the whole ladder with ``all_rungs``).

    Returns ``(y, rungs, g)``.
    """
    if form == "amplitude":
        if not isinstance(s, QCState):
            raise TypeError("amplitude-form integration needs a QCState (phases)")
        R = np.abs(s.a) ** 2 + np.abs(s.b) ** 2
        rungs = np.arange(R.size) if all_rungs else _active_rungs(R)
        a, b = s.a[rungs], s.b[rungs]
        y = np.concatenate([[s.x, s.p], a.real, a.imag, b.real, b.imag])
    elif form == "bloch":
        if isinstance(s, QCState):
            s = bloch_from_amplitudes(s)
        rungs = np.arange(s.R.size) if all_rungs else _active_rungs(s.R)
        y = np.concatenate([[s.x, s.p], s.u[rungs], s.v[rungs], s.z[rungs]])
    else:
        raise ValueError(f"unknown form {form!r}")
    return np.ascontiguousarray(y, dtype=float), rungs, np.sqrt(rungs + 1.0)


def _invariants(y, form, K, omega_r, delta, g):
    if form == "bloch":
        u, v, z = y[2:2 + K], y[2 + K:2 + 2 * K], y[2 + 2 * K:]
        R = np.sqrt(u * u + v * v + z * z)
    else:
        a = y[2:2 + K] + 1j * y[2 + K:2 + 2 * K]
        b = y[2 + 2 * K:2 + 3 * K] + 1j * y[2 + 3 * K:]
        R = np.abs(a) ** 2 + np.abs(b) ** 2
        w = a * np.conj(b)
        u, z = 2 * w.real, np.abs(a) ** 2 - np.abs(b) ** 2
    E = omega_r * y[1] ** 2 / 2 - delta / 2 * z.sum() - math.cos(y[0]) * np.dot(g, u)
    return R, E


def integrate(s0, params: SystemParams, tau_end: float, ctrl: StepController | None = None,
              sample_dt: float = 0.1, form: str = "bloch", all_rungs: bool = False) -> Trajectory:
    """Integrate from ``s0`` to the absolute time ``tau_end``.

    Samples are taken every ``sample_dt`` starting at ``s0.tau`` by dense
    interpolation.  Rung norms and energy are checked every
    ``ctrl.monitor_every`` accepted steps.  Empty rungs stay empty, so by
    default only the occupied ones are integrated; ``all_rungs`` forces the
    whole ladder.

    Raises
    ------
    StepUnderflowError, LeakageError, InvariantDriftError
    """
    if ctrl is None:
        ctrl = StepController.from_params(params)
    t0 = float(s0.tau)
    if not tau_end > t0:
        raise ValueError("tau_end must exceed the initial time")
    if not sample_dt > 0:
        raise ValueError("sample_dt must be positive")
    y, rungs, g = pack(s0, form, all_rungs)
    K = rungs.size
    N = s0.n_trunc
    if N in rungs:
        R_top = integral_R(s0, N)
        if R_top > params.leak_tol:
            raise LeakageError(f"top rung n={N} holds probability {R_top:.3e} > leak_tol")
    code = _core.BLOCH if form == "bloch" else _core.AMPLITUDE
    om, de = params.omega_r, params.delta
    rtol, atol = ctrl.rel_tol, ctrl.abs_tol
    if form == "amplitude":
        rtol, atol = rtol * ctrl.amplitude_tol_scale, atol * ctrl.amplitude_tol_scale

    n_samples = int(math.floor((tau_end - t0) / sample_dt * (1 + 1e-12))) + 1
    ts = t0 + sample_dt * np.arange(n_samples)
    out = np.empty((n_samples, y.size))
    R0, E0 = _invariants(y, form, K, om, de, g)
    drift_lim = ctrl.drift_factor * ctrl.rel_tol
    # energy drift is judged relative to the energy scale so fast atoms,
    # whose kinetic term alone carries round-off above 1e-8, stay usable
    e_lim = drift_lim * max(1.0, abs(E0), om * y[1] ** 2 / 2)

    f = _core.rhs(code, y, om, de, g)
    h = ctrl.first_step or _core.initial_step(code, y, f, om, de, g, rtol, atol, tau_end - t0)
    t, i_s, steps, max_dR, max_dE = t0, 0, 0, 0.0, 0.0
    while t < tau_end:
        t, h, i_s, n, status = _core.run_sampled(
            code, t, y, f, h, tau_end, rtol, atol, ctrl.max_step, om, de, g,
            ts, out, i_s, ctrl.monitor_every)
        steps += n
        if status == _core.STEP_UNDERFLOW or (ctrl.min_step > 0 and h < ctrl.min_step and t < tau_end):
            raise StepUnderflowError(f"step size underflow at tau={t:.6g}")
        if status == _core.NON_FINITE:
            raise IntegrationError(f"non-finite state at tau={t:.6g}")
        R, E = _invariants(y, form, K, om, de, g)
        dR = float(np.max(np.abs(R - R0))) if K else 0.0
        dE = abs(E - E0)
        max_dR, max_dE = max(max_dR, dR), max(max_dE, dE)
        if dR > drift_lim or dE > e_lim:
            raise InvariantDriftError(
                f"invariant drift at tau={t:.6g}: |dR|={dR:.2e} (limit {drift_lim:.1e}), "
                f"|dE|={dE:.2e} (limit {e_lim:.1e})")
    # the last sample sits on tau_end up to rounding
    while i_s < n_samples:
        out[i_s] = y
        i_s += 1

    traj = Trajectory(
        form=form, params=params, n_trunc=N, rungs=rungs, tau=ts,
        x=out[:, 0].copy(), p=out[:, 1].copy(), block=out[:, 2:].copy(),
        b0=b0_exact(_b0_of(s0), de, ts - t0),
        stats={"steps": steps, "max_R_drift": max_dR, "max_E_drift": max_dE,
               "final_R_drift": dR, "final_E_drift": dE, "rel_tol": rtol, "abs_tol": atol},
    )
    return traj


def _b0_of(s) -> complex:
    if isinstance(s, QCState):
        return s.b0
    # Bloch states only know |b0|; its phase is immaterial for every
    # observable computed from them
    return complex(math.sqrt(s.b0_mag2))


def write_trajectory_csv(traj: Trajectory, path, header: dict | None = None, digits: int = 12):
    """CSV with columns tau, x, p, z, P, S_L, S_N, E, R_drift.

    ``header`` entries are written first as ``# key = value`` lines.
    """
    from . import observables as obs

    z = obs.inversion(traj)
    P = obs.purity(traj)
    SL = 1 - P
    SN = obs.von_neumann_entropy(traj)
    E = traj.energy()
    R = traj.rung_norms()
    R_drift = np.max(np.abs(R - R[0]), axis=1)
    fmt = f"{{:.{digits}g}}"
    with open(path, "w", newline="") as fh:
        for k, v in (header or {}).items():
            fh.write(f"# {k} = {v}\n")
        w = csv.writer(fh)
        w.writerow(["tau", "x", "p", "z", "P", "S_L", "S_N", "E", "R_drift"])
        for row in zip(traj.tau, traj.x, traj.p, z, P, SL, SN, E, R_drift):
            w.writerow([fmt.format(v) for v in row])
