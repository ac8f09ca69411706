"""State types and initial conditions for an atom walking in a cavity mode.

The quantum part is stored rung by rung: rung ``n`` is the pair of
amplitudes ``(a_n, b_{n+1})`` for ``|2, n>`` and ``|1, n+1>``.  With a
truncation ``N`` the ladder holds rungs ``0..N`` plus the lone amplitude
``b_0`` of ``|1, 0>``, which only picks up a phase.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln
from scipy.stats import poisson

__all__ = [
    "SystemParams",
    "AtomInit",
    "Fock",
    "Coherent",
    "QCState",
    "BlochState",
    "TruncationError",
    "fock_initial",
    "coherent_initial",
    "initial_state",
    "InitialCondition",
    "bloch_from_amplitudes",
    "amplitude_moduli_from_bloch",
]

NORM_TOL = 1e-12


class TruncationError(ValueError):
    """The requested field state does not fit into the truncated ladder."""


@dataclass(frozen=True)
class SystemParams:
    """Control parameters, all dimensionless (frequencies in units of the
    vacuum Rabi frequency)."""

    omega_r: float = 0.001
    delta: float = 0.0
    n_trunc: int = 12
    rel_tol: float = 1e-10
    abs_tol: float = 1e-12
    leak_tol: float = 1e-8

    def __post_init__(self):
        if not self.omega_r > 0:
            raise ValueError(f"omega_r must be positive, got {self.omega_r}")
        if int(self.n_trunc) != self.n_trunc or self.n_trunc < 1:
            raise ValueError(f"n_trunc must be an integer >= 1, got {self.n_trunc}")
        for name in ("rel_tol", "abs_tol", "leak_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not math.isfinite(self.delta):
            raise ValueError("delta must be finite")

    def replace(self, **changes) -> "SystemParams":
        kw = {k: getattr(self, k) for k in self.__dataclass_fields__}
        kw.update(changes)
        return SystemParams(**kw)


@dataclass(frozen=True)
class AtomInit:
    """Initial internal state ``amp_excited |2> + amp_ground |1>``."""

    amp_excited: complex
    amp_ground: complex

    def __post_init__(self):
        nrm = abs(self.amp_excited) ** 2 + abs(self.amp_ground) ** 2
        if abs(nrm - 1.0) > 1e-9:
            raise ValueError(f"atomic amplitudes not normalized (|e|^2+|g|^2 = {nrm})")

    @classmethod
    def excited(cls) -> "AtomInit":
        return cls(1.0, 0.0)

    @classmethod
    def ground(cls) -> "AtomInit":
        return cls(0.0, 1.0)

    @classmethod
    def from_inversion(cls, z: float, phase: float = 0.0) -> "AtomInit":
        """Atom with inversion ``z``; ``phase`` is the relative phase of the
        excited amplitude."""
        if not -1.0 <= z <= 1.0:
            raise ValueError(f"inversion must lie in [-1, 1], got {z}")
        return cls(math.sqrt((1 + z) / 2) * cmath.exp(1j * phase), math.sqrt((1 - z) / 2))

    @classmethod
    def superposition(cls, phase: float = 0.0) -> "AtomInit":
        return cls.from_inversion(0.0, phase)


@dataclass(frozen=True)
class Fock:
    n: int


@dataclass(frozen=True)
class Coherent:
    alpha: complex


def _frozen(arr, dtype):
    out = np.array(arr, dtype=dtype)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class QCState:
    """Full hybrid state in amplitude form.

    ``a[n]`` is the amplitude of ``|2, n>`` and ``b[n]`` that of
    ``|1, n+1>`` for ``n = 0..N``; ``b0`` belongs to ``|1, 0>``.
    """

    tau: float
    x: float
    p: float
    b0: complex
    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        a = _frozen(self.a, complex)
        b = _frozen(self.b, complex)
        if a.shape != b.shape or a.ndim != 1:
            raise ValueError("a and b must be 1-d arrays of equal length")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "b0", complex(self.b0))
        vals = np.concatenate([a, b, [self.b0, self.x, self.p, self.tau]])
        if not np.all(np.isfinite(vals)):
            raise ValueError("state has non-finite entries")

    @property
    def n_trunc(self) -> int:
        return self.a.size - 1

    def norm2(self) -> float:
        return float(np.sum(np.abs(self.a) ** 2) + np.sum(np.abs(self.b) ** 2) + abs(self.b0) ** 2)

    def ground_ladder(self) -> np.ndarray:
        """``b_n`` for ``n = 0..N+1``."""
        return np.concatenate([[self.b0], self.b])

    def excited_ladder(self) -> np.ndarray:
        """``a_n`` for ``n = 0..N+1`` (``a_{N+1}`` is outside the ladder, 0)."""
        return np.concatenate([self.a, [0.0]])


@dataclass(frozen=True)
class BlochState:
    """Hybrid state in real Bloch variables, one ``(u, v, z)`` per rung."""

    tau: float
    x: float
    p: float
    u: np.ndarray
    v: np.ndarray
    z: np.ndarray
    R: np.ndarray
    b0_mag2: float

    def __post_init__(self):
        for name in ("u", "v", "z", "R"):
            object.__setattr__(self, name, _frozen(getattr(self, name), float))
        if not (self.u.shape == self.v.shape == self.z.shape == self.R.shape):
            raise ValueError("u, v, z, R must share one shape")
        vals = np.concatenate([self.u, self.v, self.z, [self.x, self.p, self.tau, self.b0_mag2]])
        if not np.all(np.isfinite(vals)):
            raise ValueError("state has non-finite entries")

    @property
    def n_trunc(self) -> int:
        return self.u.size - 1

    @classmethod
    def from_uvz(cls, tau, x, p, u, v, z, b0_mag2=0.0) -> "BlochState":
        u, v, z = (np.asarray(q, dtype=float) for q in (u, v, z))
        return cls(tau, x, p, u, v, z, np.sqrt(u * u + v * v + z * z), b0_mag2)


def _check_normalized(s: QCState):
    nrm = s.norm2()
    if abs(nrm - 1.0) > NORM_TOL:
        raise ValueError(f"constructed state not normalized: {nrm!r}")
    return s


def fock_initial(n: int, atom: AtomInit, params: SystemParams, x0=0.0, p0=0.0) -> QCState:
    """Product state ``atom (x) |n>``."""
    N = params.n_trunc
    if n < 0 or n + 1 > N:
        raise TruncationError(f"Fock index {n} needs n_trunc >= {n + 1}, have {N}")
    a = np.zeros(N + 1, complex)
    b = np.zeros(N + 1, complex)
    a[n] = atom.amp_excited
    b0 = 0.0
    if n == 0:
        b0 = atom.amp_ground
    else:
        b[n - 1] = atom.amp_ground
    return _check_normalized(QCState(0.0, float(x0), float(p0), b0, a, b))


def coherent_coefficients(alpha: complex, n_max: int) -> np.ndarray:
    """Unnormalized coherent-state coefficients ``c_0..c_{n_max}``."""
    n = np.arange(n_max + 1)
    r = abs(alpha)
    if r == 0:
        c = np.zeros(n_max + 1, complex)
        c[0] = 1.0
        return c
    mag = np.exp(-0.5 * r * r + n * math.log(r) - 0.5 * gammaln(n + 1))
    return mag * np.exp(1j * n * cmath.phase(alpha))


def coherent_tail_mass(alpha: complex, n_max: int) -> float:
    """Poisson probability of finding more than ``n_max`` photons."""
    mean = abs(alpha) ** 2
    if mean == 0:
        return 0.0
    return float(poisson.sf(n_max, mean))


def coherent_initial(alpha: complex, atom: AtomInit, params: SystemParams, x0=0.0, p0=0.0) -> QCState:
    """Product state ``atom (x) |alpha>`` truncated at ``n_trunc`` photons and
    renormalized."""
    N = params.n_trunc
    tail = coherent_tail_mass(alpha, N)
    if tail >= params.leak_tol:
        raise TruncationError(
            f"coherent tail mass {tail:.3e} beyond n={N} exceeds leak_tol={params.leak_tol:.1e}"
        )
    c = coherent_coefficients(alpha, N)
    c = c / np.linalg.norm(c)
    a = atom.amp_excited * c
    b = np.zeros(N + 1, complex)
    b[:N] = atom.amp_ground * c[1:]
    b0 = atom.amp_ground * c[0]
    return _check_normalized(QCState(0.0, float(x0), float(p0), b0, a, b))


def initial_state(field_init, atom: AtomInit, params: SystemParams, x0=0.0, p0=0.0) -> QCState:
    if isinstance(field_init, Fock):
        return fock_initial(field_init.n, atom, params, x0, p0)
    if isinstance(field_init, Coherent):
        return coherent_initial(field_init.alpha, atom, params, x0, p0)
    raise TypeError(f"unknown field initializer {field_init!r}")


@dataclass(frozen=True)
class InitialCondition:
    """Recipe for a product initial state, rebuilt against any
    :class:`SystemParams` (drivers vary ``p0``, ``delta``, ...)."""

    field: Fock | Coherent
    atom: AtomInit
    x0: float = 0.0
    p0: float = 25.0

    def build(self, params: SystemParams) -> QCState:
        return initial_state(self.field, self.atom, params, self.x0, self.p0)

    def replace(self, **changes) -> "InitialCondition":
        kw = {k: getattr(self, k) for k in self.__dataclass_fields__}
        kw.update(changes)
        return InitialCondition(**kw)


def bloch_from_amplitudes(s: QCState) -> BlochState:
    w = s.a * np.conj(s.b)
    a2 = np.abs(s.a) ** 2
    b2 = np.abs(s.b) ** 2
    return BlochState(s.tau, s.x, s.p, 2 * w.real, -2 * w.imag, a2 - b2, a2 + b2, abs(s.b0) ** 2)


def amplitude_moduli_from_bloch(s: BlochState) -> tuple[np.ndarray, np.ndarray]:
    """Per-rung ``(|a_n|^2, |b_{n+1}|^2)``; phases are not recoverable."""
    return (s.R + s.z) / 2, (s.R - s.z) / 2
