"""Jitted DOP853 core and right-hand-side kernels.

Everything in here works on flat float64 vectors so numba can compile it.
Two layouts are used, both over a set of K *active* rungs with coupling
constants ``g[k] = sqrt(n_k + 1)``:

* Bloch:      ``[x, p, u_0..u_K-1, v_0..v_K-1, z_0..z_K-1]``
* amplitude:  ``[x, p, Re a, Im a, Re b, Im b]`` with ``b[k] = b_{n_k+1}``

The stepper follows Hairer's DOP853 (coefficients are taken from
``scipy.integrate._ivp.dop853_coefficients``) but measures the local error
in the max norm, so rungs that are identically zero never influence the
step size.
"""

import math

import numpy as np
from numba import njit
from scipy.integrate._ivp import dop853_coefficients as _dc

N_STAGES = _dc.N_STAGES
A = np.ascontiguousarray(_dc.A, dtype=np.float64)
B = np.ascontiguousarray(_dc.B, dtype=np.float64)
C = np.ascontiguousarray(_dc.C, dtype=np.float64)
E3 = np.ascontiguousarray(_dc.E3, dtype=np.float64)
E5 = np.ascontiguousarray(_dc.E5, dtype=np.float64)
D = np.ascontiguousarray(_dc.D, dtype=np.float64)
N_EXT = _dc.N_STAGES_EXTENDED
INTERP_POWER = _dc.INTERPOLATOR_POWER

SAFETY = 0.9
MIN_FACTOR = 0.2
MAX_FACTOR = 10.0
ERR_EXPONENT = -1.0 / 8.0

# status codes returned by the jitted loops
OK = 0
STEP_UNDERFLOW = 1
NON_FINITE = 2


# --------------------------------------------------------------------------
# right-hand sides
# --------------------------------------------------------------------------

@njit(cache=True)
def bloch_rhs_into(y, dy, omega_r, delta, g):
    K = g.shape[0]
    cx = math.cos(y[0])
    sx = math.sin(y[0])
    force = 0.0
    for k in range(K):
        u = y[2 + k]
        v = y[2 + K + k]
        z = y[2 + 2 * K + k]
        force += g[k] * u
        dy[2 + k] = delta * v
        dy[2 + K + k] = -delta * u + 2.0 * g[k] * z * cx
        dy[2 + 2 * K + k] = -2.0 * g[k] * v * cx
    dy[0] = omega_r * y[1]
    dy[1] = -sx * force


@njit(cache=True)
def amplitude_rhs_into(y, dy, omega_r, delta, g):
    K = g.shape[0]
    cx = math.cos(y[0])
    sx = math.sin(y[0])
    h = 0.5 * delta
    force = 0.0
    for k in range(K):
        ar = y[2 + k]
        ai = y[2 + K + k]
        br = y[2 + 2 * K + k]
        bi = y[2 + 3 * K + k]
        gc = g[k] * cx
        # Re(a b*)
        force += g[k] * (ar * br + ai * bi)
        # da/dt = i (delta/2 a + g cos x b)
        dy[2 + k] = -(h * ai + gc * bi)
        dy[2 + K + k] = h * ar + gc * br
        # db/dt = i (-delta/2 b + g cos x a)
        dy[2 + 2 * K + k] = h * bi - gc * ai
        dy[2 + 3 * K + k] = -h * br + gc * ar
    dy[0] = omega_r * y[1]
    dy[1] = -2.0 * sx * force


BLOCH = 0
AMPLITUDE = 1


@njit(cache=True)
def rhs_into(form, y, dy, omega_r, delta, g):
    if form == BLOCH:
        bloch_rhs_into(y, dy, omega_r, delta, g)
    else:
        amplitude_rhs_into(y, dy, omega_r, delta, g)


@njit(cache=True)
def rhs(form, y, omega_r, delta, g):
    dy = np.empty_like(y)
    rhs_into(form, y, dy, omega_r, delta, g)
    return dy


@njit(cache=True)
def bloch_rhs(y, omega_r, delta, g):
    return rhs(BLOCH, y, omega_r, delta, g)


@njit(cache=True)
def amplitude_rhs(y, omega_r, delta, g):
    return rhs(AMPLITUDE, y, omega_r, delta, g)


# --------------------------------------------------------------------------
# DOP853 stepping
#
# ``Work`` buffers: Kst (13, n) stages, the last row doubling as f(y_new);
# Kx (16, n) extended stages for dense output; F (7, n) interpolant;
# y_new and ytmp (n,).
# --------------------------------------------------------------------------

@njit(cache=True)
def make_work(n):
    return (np.empty((N_STAGES + 1, n)), np.empty((N_EXT, n)),
            np.empty((INTERP_POWER, n)), np.empty(n), np.empty(n))


@njit(cache=True)
def _max_scaled(vec, scale):
    m = 0.0
    for i in range(vec.shape[0]):
        r = abs(vec[i] / scale[i])
        if r > m:
            m = r
    return m


@njit(cache=True)
def initial_step(form, y0, f0, omega_r, delta, g, rtol, atol, interval):
    scale = atol + np.abs(y0) * rtol
    d0 = _max_scaled(y0, scale)
    d1 = _max_scaled(f0, scale)
    if d0 < 1e-5 or d1 < 1e-5:
        h0 = 1e-6
    else:
        h0 = 0.01 * d0 / d1
    h0 = min(h0, interval)
    f1 = rhs(form, y0 + h0 * f0, omega_r, delta, g)
    d2 = _max_scaled(f1 - f0, scale) / h0
    if d1 <= 1e-15 and d2 <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1.0 / 8.0)
    return min(100.0 * h0, h1, interval)


@njit(cache=True)
def _rk_stages(form, y, f, h, omega_r, delta, g, Kst, y_new, ytmp):
    n = y.shape[0]
    for i in range(n):
        Kst[0, i] = f[i]
    for s in range(1, N_STAGES):
        for i in range(n):
            acc = 0.0
            for j in range(s):
                acc += A[s, j] * Kst[j, i]
            ytmp[i] = y[i] + h * acc
        rhs_into(form, ytmp, Kst[s], omega_r, delta, g)
    for i in range(n):
        acc = 0.0
        for j in range(N_STAGES):
            acc += B[j] * Kst[j, i]
        y_new[i] = y[i] + h * acc
    rhs_into(form, y_new, Kst[N_STAGES], omega_r, delta, g)


@njit(cache=True)
def _error_norm(Kst, h, y, y_new, rtol, atol):
    n = y.shape[0]
    e5max = 0.0
    e3max = 0.0
    for i in range(n):
        sc = atol + rtol * max(abs(y[i]), abs(y_new[i]))
        e5 = 0.0
        e3 = 0.0
        for j in range(N_STAGES + 1):
            e5 += E5[j] * Kst[j, i]
            e3 += E3[j] * Kst[j, i]
        e5 = (e5 / sc) ** 2
        e3 = (e3 / sc) ** 2
        if e5 > e5max:
            e5max = e5
        if e3 > e3max:
            e3max = e3
    if e5max == 0.0 and e3max == 0.0:
        return 0.0
    return abs(h) * e5max / math.sqrt(e5max + 0.01 * e3max)


@njit(cache=True)
def step(form, t, y, f, h_abs, t_bound, rtol, atol, hmax, omega_r, delta, g, work):
    """One accepted step toward ``t_bound`` (either direction).

    The new state lands in ``work[3]`` and its derivative in
    ``work[0][-1]``; ``y`` and ``f`` are left untouched.  Returns
    ``(t_new, h_used, h_abs_next, status)``.
    """
    Kst, y_new, ytmp = work[0], work[3], work[4]
    direction = 1.0 if t_bound >= t else -1.0
    min_step = 10.0 * abs(np.nextafter(t, direction * np.inf) - t)
    if h_abs > hmax:
        h_abs = hmax
    elif h_abs < min_step:
        h_abs = min_step
    rejected = False
    while True:
        if h_abs < min_step:
            return t, 0.0, h_abs, STEP_UNDERFLOW
        h = h_abs * direction
        t_new = t + h
        if direction * (t_new - t_bound) > 0:
            t_new = t_bound
        h = t_new - t
        h_abs = abs(h)
        _rk_stages(form, y, f, h, omega_r, delta, g, Kst, y_new, ytmp)
        err = _error_norm(Kst, h, y, y_new, rtol, atol)
        if not math.isfinite(err):
            h_abs *= MIN_FACTOR
            rejected = True
            continue
        if err < 1.0:
            if err == 0.0:
                factor = MAX_FACTOR
            else:
                factor = min(MAX_FACTOR, SAFETY * err ** ERR_EXPONENT)
            if rejected:
                factor = min(1.0, factor)
            return t_new, h, h_abs * factor, OK
        h_abs *= max(MIN_FACTOR, SAFETY * err ** ERR_EXPONENT)
        rejected = True


@njit(cache=True)
def accept(y, f, work):
    y[:] = work[3]
    f[:] = work[0][N_STAGES]


@njit(cache=True)
def dense_coeffs(form, h, y_old, omega_r, delta, g, work):
    """Fill the interpolant ``work[2]`` for the step just taken from
    ``y_old`` (3 extra stages)."""
    Kst, Kx, F, y_new, ytmp = work
    n = y_old.shape[0]
    Kx[:N_STAGES + 1] = Kst
    for s in range(N_STAGES + 1, N_EXT):
        for i in range(n):
            acc = 0.0
            for j in range(s):
                acc += A[s, j] * Kx[j, i]
            ytmp[i] = y_old[i] + h * acc
        rhs_into(form, ytmp, Kx[s], omega_r, delta, g)
    for i in range(n):
        f_old = Kx[0, i]
        f_new = Kst[N_STAGES, i]
        dly = y_new[i] - y_old[i]
        F[0, i] = dly
        F[1, i] = h * f_old - dly
        F[2, i] = 2.0 * dly - h * (f_new + f_old)
        for r in range(INTERP_POWER - 3):
            acc = 0.0
            for j in range(N_EXT):
                acc += D[r, j] * Kx[j, i]
            F[3 + r, i] = h * acc


@njit(cache=True)
def dense_eval_component(F, y_old, theta, i):
    m = F.shape[0]
    acc = 0.0
    for r in range(m):
        acc += F[m - 1 - r, i]
        if r % 2 == 0:
            acc *= theta
        else:
            acc *= 1.0 - theta
    return acc + y_old[i]


@njit(cache=True)
def dense_eval_into(F, y_old, theta, out):
    for i in range(y_old.shape[0]):
        out[i] = dense_eval_component(F, y_old, theta, i)


# --------------------------------------------------------------------------
# driver loops
# --------------------------------------------------------------------------

@njit(cache=True)
def run_sampled(form, t, y, f, h_abs, t_end, rtol, atol, hmax, omega_r, delta, g,
                sample_t, out, i_sample, max_steps):
    """Advance up to ``max_steps`` accepted steps, filling ``out`` rows at
    ``sample_t`` by dense interpolation.  ``y`` and ``f`` are updated in
    place.

    Returns ``(t, h_abs, i_sample, n_steps, status)``.
    """
    n = y.shape[0]
    work = make_work(n)
    n_samples = sample_t.shape[0]
    steps = 0
    while steps < max_steps and t < t_end:
        t_new, h, h_next, status = step(
            form, t, y, f, h_abs, t_end, rtol, atol, hmax, omega_r, delta, g, work)
        if status != OK:
            return t, h_abs, i_sample, steps, status
        y_new = work[3]
        for i in range(n):
            if not math.isfinite(y_new[i]):
                return t, h_abs, i_sample, steps, NON_FINITE
        if i_sample < n_samples and sample_t[i_sample] <= t_new:
            dense_coeffs(form, h, y, omega_r, delta, g, work)
            while i_sample < n_samples and sample_t[i_sample] <= t_new:
                ts = sample_t[i_sample]
                if ts == t_new:
                    out[i_sample] = y_new
                else:
                    dense_eval_into(work[2], y, (ts - t) / h, out[i_sample])
                i_sample += 1
        accept(y, f, work)
        t, h_abs = t_new, h_next
        steps += 1
    return t, h_abs, i_sample, steps, OK


@njit(cache=True)
def advance_to(form, t, y, f, h_abs, t_end, rtol, atol, hmax, omega_r, delta, g, work):
    """Integrate ``y`` (in place) exactly to ``t_end`` without sampling.

    Returns ``(t, h_abs, n_steps, status)``.
    """
    steps = 0
    while t != t_end:
        t_new, h, h_abs, status = step(
            form, t, y, f, h_abs, t_end, rtol, atol, hmax, omega_r, delta, g, work)
        if status != OK:
            return t, h_abs, steps, status
        accept(y, f, work)
        t = t_new
        steps += 1
    return t, h_abs, steps, OK


# --------------------------------------------------------------------------
# chaos kernels
# --------------------------------------------------------------------------

@njit(cache=True)
def benettin(form, y0, d0, renorm, n_renorm, rtol, atol, omega_r, delta, g):
    """Two-trajectory maximal Lyapunov exponent.

    The companion starts displaced by ``d0`` along the unit diagonal of all
    coordinates and is pulled back to distance ``d0`` every ``renorm``.
    Returns ``(log_stretch[n_renorm], status)``.
    """
    n = y0.shape[0]
    work = make_work(n)
    disp = np.ones(n) / math.sqrt(n)
    ya = y0.copy()
    yb = y0 + d0 * disp
    fa = rhs(form, ya, omega_r, delta, g)
    fb = rhs(form, yb, omega_r, delta, g)
    ha = initial_step(form, ya, fa, omega_r, delta, g, rtol, atol, renorm)
    hb = ha
    logs = np.zeros(n_renorm)
    t = 0.0
    for k in range(n_renorm):
        t_next = (k + 1) * renorm
        _, ha, _, st = advance_to(form, t, ya, fa, ha, t_next, rtol, atol,
                                  np.inf, omega_r, delta, g, work)
        if st != OK:
            return logs[:k], st
        _, hb, _, st = advance_to(form, t, yb, fb, hb, t_next, rtol, atol,
                                  np.inf, omega_r, delta, g, work)
        if st != OK:
            return logs[:k], st
        d2 = 0.0
        for i in range(n):
            d2 += (yb[i] - ya[i]) ** 2
        d = math.sqrt(d2)
        if d == 0.0 or not math.isfinite(d):
            return logs[:k], NON_FINITE
        logs[k] = math.log(d / d0)
        for i in range(n):
            yb[i] = ya[i] + (d0 / d) * (yb[i] - ya[i])
        rhs_into(form, yb, fb, omega_r, delta, g)
        t = t_next
    return logs, OK


@njit(cache=True)
def exit_time(form, y0, x_lo, x_hi, tau_max, p_hyst, z_index0, n_z, b0_mag2,
              t_tol, rtol, atol, omega_r, delta, g):
    """Integrate until x leaves ``(x_lo, x_hi)`` or ``tau_max`` passes.

    The crossing time is refined by bisection on the dense interpolant.
    ``z_index0``/``n_z`` locate the z-block (Bloch layout) for the exit
    inversion.  Returns ``(T, turns, x_exit, z_out, timed_out, status)``.
    """
    n = y0.shape[0]
    work = make_work(n)
    t = 0.0
    y = y0.copy()
    f = rhs(form, y, omega_r, delta, g)
    ye = np.empty(n)
    h_abs = initial_step(form, y, f, omega_r, delta, g, rtol, atol, tau_max)
    turns = 0
    last_sign = 0
    if y[1] > p_hyst:
        last_sign = 1
    elif y[1] < -p_hyst:
        last_sign = -1
    while t < tau_max:
        t_new, h, h_abs, st = step(
            form, t, y, f, h_abs, tau_max, rtol, atol, np.inf, omega_r, delta, g, work)
        if st != OK:
            return t, turns, y[0], np.nan, False, st
        y_new = work[3]
        xn = y_new[0]
        if xn <= x_lo or xn >= x_hi:
            target = x_lo if xn <= x_lo else x_hi
            dense_coeffs(form, h, y, omega_r, delta, g, work)
            F = work[2]
            lo, hi = 0.0, 1.0
            while (hi - lo) * h > t_tol:
                mid = 0.5 * (lo + hi)
                xm = dense_eval_component(F, y, mid, 0)
                if (xm - target) * (y[0] - target) > 0:
                    lo = mid
                else:
                    hi = mid
            dense_eval_into(F, y, hi, ye)
            z = -b0_mag2
            for k in range(n_z):
                z += ye[z_index0 + k]
            return t + hi * h, turns, ye[0], z, False, OK
        pn = y_new[1]
        if pn > p_hyst and last_sign != 1:
            if last_sign == -1:
                turns += 1
            last_sign = 1
        elif pn < -p_hyst and last_sign != -1:
            if last_sign == 1:
                turns += 1
            last_sign = -1
        accept(y, f, work)
        t = t_new
    z = -b0_mag2
    for k in range(n_z):
        z += y[z_index0 + k]
    return t, turns, y[0], z, True, OK
