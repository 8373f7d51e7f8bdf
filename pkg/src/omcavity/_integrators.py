"""Adaptive Dormand-Prince 5(4) cores for the semiclassical equations.

Jitted kernels, kept free of Python objects: the 4-component state is
(x, y, p, q); mode 1 appends a tangent vector propagated by the analytic
Jacobian for Lyapunov estimates.  Dense output follows the classic
dopri5 continuous extension, so trajectories are sampled on uniform
grids independent of the internal step sequence.
"""

from __future__ import annotations

import numpy as np
from numba import njit

# status codes returned by the core
OK = 0
STEP_UNDERFLOW = 1
NONFINITE = 2
MAX_STEPS = 3

# Dormand-Prince 5(4) tableau
_C2, _C3, _C4, _C5 = 0.2, 0.3, 0.8, 8.0 / 9.0
_A21 = 0.2
_A31, _A32 = 3.0 / 40.0, 9.0 / 40.0
_A41, _A42, _A43 = 44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0
_A51, _A52, _A53, _A54 = 19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0
_A61, _A62, _A63, _A64, _A65 = (
    9017.0 / 3168.0,
    -355.0 / 33.0,
    46732.0 / 5247.0,
    49.0 / 176.0,
    -5103.0 / 18656.0,
)
_B1, _B3, _B4, _B5, _B6 = 35.0 / 384.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0
_E1, _E3, _E4, _E5, _E6, _E7 = (
    71.0 / 57600.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
)
# dense-output weights (Hairer, Norsett, Wanner contd5)
_D1 = -12715105075.0 / 11282082432.0
_D3 = 87487479700.0 / 32700410799.0
_D4 = -10690763975.0 / 1880347072.0
_D5 = 701980252875.0 / 199316789632.0
_D6 = -1453857185.0 / 822651844.0
_D7 = 69997945.0 / 29380423.0


@njit(cache=True)
def _rhs(mode, t, y, f, kappa, gm, wm, delta, g0, ac, e_pump, sp_amp, sp_om):
    x = y[0]
    yq = y[1]
    p = y[2]
    q = y[3]
    n = x * x + yq * yq
    er = e_pump
    ei = 0.0
    if sp_amp != 0.0:
        er = er - sp_amp * np.sin(sp_om * t)
        ei = -sp_amp * np.cos(sp_om * t)
    f[0] = -0.5 * kappa * x - delta * yq - 2.0 * g0 * p * yq - ac * yq * n + er
    f[1] = delta * x - 0.5 * kappa * yq + 2.0 * g0 * p * x + ac * x * n + ei
    f[2] = -0.5 * gm * p + wm * q
    f[3] = g0 * n - wm * p - 0.5 * gm * q
    if mode == 1:
        vx = y[4]
        vy = y[5]
        vp = y[6]
        vq = y[7]
        j12 = -delta - 2.0 * g0 * p - ac * (x * x + 3.0 * yq * yq)
        j21 = delta + 2.0 * g0 * p + ac * (3.0 * x * x + yq * yq)
        cross = 2.0 * ac * x * yq
        f[4] = (-0.5 * kappa - cross) * vx + j12 * vy - 2.0 * g0 * yq * vp
        f[5] = j21 * vx + (-0.5 * kappa + cross) * vy + 2.0 * g0 * x * vp
        f[6] = -0.5 * gm * vp + wm * vq
        f[7] = 2.0 * g0 * x * vx + 2.0 * g0 * yq * vy - wm * vp - 0.5 * gm * vq


@njit(cache=True)
def dp45_core(
    mode,
    y,
    t0,
    t1,
    kappa,
    gm,
    wm,
    delta,
    g0,
    ac,
    e_pump,
    sp_amp,
    sp_om,
    rtol,
    atol,
    h_init,
    fixed_h,
    max_steps,
    sample_ts,
    sample_out,
    sample_start,
):
    """Advance y from t0 to t1, writing dense samples falling in (t0, t1].

    Returns (status, t_reached, steps, rejected, nfev, max_err, err_accum,
    next_sample_index, h_last).  ``sample_ts`` must be ascending; samples
    with index >= sample_start and time <= t1 (+rounding slack) are filled.
    """
    n = y.shape[0]
    f0 = np.empty(n)
    k1 = np.empty(n)
    k2 = np.empty(n)
    k3 = np.empty(n)
    k4 = np.empty(n)
    k5 = np.empty(n)
    k6 = np.empty(n)
    k7 = np.empty(n)
    ytmp = np.empty(n)
    ynew = np.empty(n)
    t = t0
    h = h_init if fixed_h <= 0.0 else fixed_h
    span = t1 - t0
    if h > span:
        h = span
    steps = 0
    rejected = 0
    nfev = 1
    max_err = 0.0
    err_accum = 0.0
    bad_trials = 0
    isamp = sample_start
    nsamp = sample_ts.shape[0]
    # emit any samples exactly at or before t0 (segment start)
    while isamp < nsamp and sample_ts[isamp] <= t0 + 1e-15 * max(abs(t0), 1.0):
        for i in range(n):
            sample_out[isamp, i] = y[i]
        isamp += 1
    _rhs(mode, t, y, k1, kappa, gm, wm, delta, g0, ac, e_pump, sp_amp, sp_om)
    while t < t1:
        if steps >= max_steps:
            return (MAX_STEPS, t, steps, rejected, nfev, max_err, err_accum, isamp, h)
        if h < 1e-14 * max(abs(t), abs(span)):
            return (STEP_UNDERFLOW, t, steps, rejected, nfev, max_err, err_accum, isamp, h)
        if t + h > t1:
            h = t1 - t
        # stages
        for i in range(n):
            ytmp[i] = y[i] + h * _A21 * k1[i]
        _rhs(mode, t + _C2 * h, ytmp, k2, kappa, gm, wm, delta, g0, ac, e_pump, sp_amp, sp_om)
        for i in range(n):
            ytmp[i] = y[i] + h * (_A31 * k1[i] + _A32 * k2[i])
        _rhs(mode, t + _C3 * h, ytmp, k3, kappa, gm, wm, delta, g0, ac, e_pump, sp_amp, sp_om)
        for i in range(n):
            ytmp[i] = y[i] + h * (_A41 * k1[i] + _A42 * k2[i] + _A43 * k3[i])
        _rhs(mode, t + _C4 * h, ytmp, k4, kappa, gm, wm, delta, g0, ac, e_pump, sp_amp, sp_om)
        for i in range(n):
            ytmp[i] = y[i] + h * (_A51 * k1[i] + _A52 * k2[i] + _A53 * k3[i] + _A54 * k4[i])
        _rhs(mode, t + _C5 * h, ytmp, k5, kappa, gm, wm, delta, g0, ac, e_pump, sp_amp, sp_om)
        for i in range(n):
            ytmp[i] = y[i] + h * (
                _A61 * k1[i] + _A62 * k2[i] + _A63 * k3[i] + _A64 * k4[i] + _A65 * k5[i]
            )
        _rhs(mode, t + h, ytmp, k6, kappa, gm, wm, delta, g0, ac, e_pump, sp_amp, sp_om)
        for i in range(n):
            ynew[i] = y[i] + h * (
                _B1 * k1[i] + _B3 * k3[i] + _B4 * k4[i] + _B5 * k5[i] + _B6 * k6[i]
            )
        _rhs(mode, t + h, ynew, k7, kappa, gm, wm, delta, g0, ac, e_pump, sp_amp, sp_om)
        nfev += 6
        # embedded error estimate
        err_norm = 0.0
        err_abs = 0.0
        finite = True
        for i in range(n):
            e = h * (
                _E1 * k1[i]
                + _E3 * k3[i]
                + _E4 * k4[i]
                + _E5 * k5[i]
                + _E6 * k6[i]
                + _E7 * k7[i]
            )
            if not (np.isfinite(ynew[i]) and np.isfinite(e)):
                finite = False
                break
            sc = atol + rtol * max(abs(y[i]), abs(ynew[i]))
            err_norm += (e / sc) ** 2
            err_abs += e * e
        if not finite:
            # reject the trial and retreat; persistent failure means the
            # solution itself is diverging
            bad_trials += 1
            rejected += 1
            if bad_trials > 80 or fixed_h > 0.0:
                return (NONFINITE, t, steps, rejected, nfev, max_err, err_accum, isamp, h)
            h = 0.2 * h
            continue
        bad_trials = 0
        err_norm = np.sqrt(err_norm / n)
        err_abs = np.sqrt(err_abs)
        accept = (fixed_h > 0.0) or (err_norm <= 1.0)
        if accept:
            steps += 1
            if err_abs > max_err:
                max_err = err_abs
            err_accum += err_abs
            t_new = t + h
            # dense output over (t, t_new]
            while isamp < nsamp and sample_ts[isamp] <= t_new + 1e-15 * max(abs(t_new), 1.0):
                ts = sample_ts[isamp]
                if ts >= t:
                    th = (ts - t) / h
                    s1 = 1.0 - th
                    for i in range(n):
                        ydiff = ynew[i] - y[i]
                        bspl = h * k1[i] - ydiff
                        r5 = h * (
                            _D1 * k1[i]
                            + _D3 * k3[i]
                            + _D4 * k4[i]
                            + _D5 * k5[i]
                            + _D6 * k6[i]
                            + _D7 * k7[i]
                        )
                        r4 = ydiff - h * k7[i] - bspl
                        sample_out[isamp, i] = y[i] + th * (
                            ydiff + s1 * (bspl + th * (r4 + s1 * r5))
                        )
                    isamp += 1
                else:
                    isamp += 1
            for i in range(n):
                y[i] = ynew[i]
                k1[i] = k7[i]  # FSAL
            t = t_new
            if fixed_h <= 0.0:
                fac = 0.9 * err_norm ** -0.2 if err_norm > 0.0 else 5.0
                if fac > 5.0:
                    fac = 5.0
                if fac < 0.2:
                    fac = 0.2
                h = h * fac
        else:
            rejected += 1
            fac = 0.9 * err_norm ** -0.2
            if fac < 0.2:
                fac = 0.2
            if fac > 1.0:
                fac = 1.0
            h = h * fac
    return (OK, t, steps, rejected, nfev, max_err, err_accum, isamp, h)


@njit(cache=True)
def rhs_eval(mode, t, y, kappa, gm, wm, delta, g0, ac, e_pump, sp_amp, sp_om):
    """Single RHS evaluation (test hook for python/jit consistency)."""
    f = np.zeros(y.shape[0])
    _rhs(mode, t, y, f, kappa, gm, wm, delta, g0, ac, e_pump, sp_amp, sp_om)
    return f
