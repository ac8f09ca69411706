"""Closed-form and asymptotic solutions used to check the integrator.

None of these call the ODE machinery; the center-of-mass input (the
integral of ``cos x`` or the position itself) is supplied by the caller.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

__all__ = [
    "OracleParams",
    "RegimeWarning",
    "constant_velocity_cos_integral",
    "resonant_zn",
    "resonant_amplitudes",
    "regime_ratio",
    "approx_zn_fast_or_detuned",
    "approx_fidelity",
    "resonant_purity",
    "doppler_rabi_purity",
    "doppler_rabi_frequency",
]

REGIME_FACTOR = 10.0


class RegimeWarning(UserWarning):
    """An asymptotic formula was used outside its separation of scales."""


@dataclass(frozen=True)
class OracleParams:
    """Initial data of one rung plus the control parameters.

    ``v_n0`` only matters through its sign, which selects the branch of the
    resonant solution (and of the detuned phase).
    """

    n: int
    R_n: float
    u_n0: float
    z_n0: float
    v_n0: float = 0.0
    p0: float = 0.0
    omega_r: float = 0.001
    delta: float = 0.0

    def __post_init__(self):
        if abs(self.z_n0) > self.R_n * (1 + 1e-12):
            raise ValueError("|z_n(0)| exceeds R_n")

    @classmethod
    def from_rung(cls, n, u, v, z, **kw) -> "OracleParams":
        return cls(n, math.sqrt(u * u + v * v + z * z), u, z, v, **kw)

    @property
    def coupling(self) -> float:
        return math.sqrt(self.n + 1)

    @property
    def resonant_amplitude(self) -> float:
        """sqrt(R^2 - u(0)^2), the radius of the circle z moves on at
        zero detuning."""
        return math.sqrt(max(self.R_n ** 2 - self.u_n0 ** 2, 0.0))

    @property
    def branch(self) -> int:
        """-1 for the upper sign of the resonant solution, +1 for the lower.

        Fixed by the sign of v(0), which is what makes z'(0) = -2 g v(0) cos x0
        agree with the equations of motion.
        """
        return -1 if self.v_n0 >= 0 else 1

    @property
    def resonant_phase(self) -> float:
        rho = self.resonant_amplitude
        if rho == 0:
            raise ValueError("resonant phase undefined: R_n^2 == u_n(0)^2")
        ratio = min(max(self.z_n0 / rho, -1.0), 1.0)
        return self.branch * math.asin(ratio)

    @property
    def detuned_phase(self) -> float:
        """Phase of the fast (u, v) rotation; arcsin(u0 / sqrt(R^2 - z0^2))
        continued to v(0) < 0 via atan2."""
        return math.atan2(self.u_n0, self.v_n0)


def constant_velocity_cos_integral(tau, omega_r: float, p0: float, x0: float = 0.0):
    """Integral of cos x over [0, tau] for free flight x = x0 + omega_r p0 tau."""
    w = omega_r * p0
    tau = np.asarray(tau, dtype=float)
    if w == 0:
        out = tau * math.cos(x0)
    else:
        out = (np.sin(x0 + w * tau) - math.sin(x0)) / w
    return float(out) if out.ndim == 0 else out


def resonant_zn(op: OracleParams, integral_of_cos_x, sign: int | None = None):
    """Exact z_n at zero detuning given the running integral of cos x.

    ``sign`` overrides the automatic branch (``-1`` upper, ``+1`` lower).
    """
    s = op.branch if sign is None else sign
    rho = op.resonant_amplitude
    if rho == 0:
        raise ValueError("resonant phase undefined: R_n^2 == u_n(0)^2")
    ratio = min(max(op.z_n0 / rho, -1.0), 1.0)
    phi = s * math.asin(ratio)
    arg = 2 * op.coupling * np.asarray(integral_of_cos_x, dtype=float) + phi
    out = s * rho * np.sin(arg)
    return float(out) if out.ndim == 0 else out


def resonant_amplitudes(a_n0: complex, b_np1_0: complex, n: int, integral_of_cos_x):
    """Exact (a_n, b_{n+1}) at zero detuning: a rotation by
    sqrt(n+1) * integral of cos x."""
    th = math.sqrt(n + 1) * np.asarray(integral_of_cos_x, dtype=float)
    c, s = np.cos(th), np.sin(th)
    return a_n0 * c + 1j * b_np1_0 * s, b_np1_0 * c + 1j * a_n0 * s


def _ratios(n, omega_r, p0, delta):
    g2 = 2 * math.sqrt(n + 1)
    v, d = abs(omega_r * p0), abs(delta)
    return {"fast": v / max(d, g2), "detuned": d / max(v, g2)}


def regime_ratio(n: int, omega_r: float, p0: float, delta: float) -> tuple[str, float]:
    """Pick the asymptotic regime with the larger separation of scales.

    Returns ``("fast", ratio)`` or ``("detuned", ratio)``.
    """
    r = _ratios(n, omega_r, p0, delta)
    return max(r.items(), key=lambda kv: kv[1])


def approx_zn_fast_or_detuned(op: OracleParams, x, tau, regime: str | None = None):
    """Amplitude-modulated z_n for very fast atoms or large detuning.

    ``x`` is the (possibly array-valued) atomic position at ``tau``.  A
    :class:`RegimeWarning` is issued when the chosen regime's scale ratio
    is below 10.
    """
    ratios = _ratios(op.n, op.omega_r, op.p0, op.delta)
    if regime is None:
        regime = max(ratios, key=ratios.get)
    if regime not in ratios:
        raise ValueError(f"unknown regime {regime!r}")
    if ratios[regime] < REGIME_FACTOR:
        warnings.warn(f"{regime} regime ratio {ratios[regime]:.3g} < {REGIME_FACTOR:g}",
                      RegimeWarning, stacklevel=2)
    x = np.asarray(x, dtype=float)
    tau = np.asarray(tau, dtype=float)
    g = op.coupling
    amp = 2 * math.sqrt(max(op.R_n ** 2 - op.z_n0 ** 2, 0.0)) * g
    phi = op.detuned_phase
    if regime == "fast":
        out = op.z_n0 - amp / (op.omega_r * op.p0) * np.cos(op.delta * tau + phi) * np.sin(x)
    else:
        d = op.delta
        out = op.z_n0 + 2 * g * op.u_n0 / d - amp / d * np.cos(x) * np.sin(d * tau + phi)
    return float(out) if out.ndim == 0 else out


def approx_fidelity(A0: float, B0: float, delta_delta: float, tau):
    out = A0 ** 2 + B0 ** 2 + 2 * A0 * B0 * np.cos(delta_delta * np.asarray(tau, dtype=float))
    return float(out) if np.ndim(out) == 0 else out


def resonant_purity(n: int, omega_r: float, p0: float, tau, x0: float = 0.0):
    """Purity at zero detuning for an atom that starts in an energy
    eigenstate and flies freely through the Fock field |n>."""
    if p0 == 0:
        raise ValueError("p0 must be nonzero")
    arg = 2 * math.sqrt(n + 1) * constant_velocity_cos_integral(tau, omega_r, p0, x0)
    out = 0.5 + 0.5 * np.cos(arg) ** 2
    return float(out) if np.ndim(out) == 0 else out


def doppler_rabi_frequency(n: int, delta: float, omega_r: float, p0: float) -> float:
    return math.sqrt((abs(delta) - omega_r * abs(p0)) ** 2 + n + 1)


def doppler_rabi_purity(n: int, delta: float, omega_r: float, p0: float, tau):
    """Purity near the Doppler-Rabi resonance.

    Only the oscillation frequency of this expression is trustworthy; its
    amplitude coefficients are dimensionally inconsistent and are kept
    unchanged rather than guessed at.
    """
    om = doppler_rabi_frequency(n, delta, omega_r, p0)
    detune = abs(delta) - omega_r * abs(p0)
    osc = detune ** 2 / om ** 2 + math.sqrt(n + 1) / om ** 2 * np.cos(om * np.asarray(tau, dtype=float))
    out = 0.5 + 0.5 * osc ** 2
    return float(out) if np.ndim(out) == 0 else out
