"""Linearized transient response to a pulsed pump with a weak probe.

Per pump segment the fluctuation dynamics around the pump-dressed steady
state is a constant-coefficient linear ODE for (a, a*, b, b*); the probe
enters as a pair of counter-rotating delta drives in the frequency
domain.  Each segment solution is the particular (steady) response plus a
homogeneous part fixed by continuity at the segment boundary; the
demodulated output shifts the pump-frame solution by the pump-probe
offset and drops the doubly-rotating term.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.signal import find_peaks, hilbert

from .dynamics import ProbeDrive, PulseSegment
from .model import (
    DeviceParams,
    hz_to_angular,
    photons_for_coupling,
)

CONDITION_LIMIT = 1e10  # eigenvector condition beyond which M is treated
# as defective and the segment falls back to direct integration

TWO_PI = 2.0 * math.pi


def build_m(
    params: DeviceParams,
    coupling_hz,
    delta_eff_hz: float,
) -> np.ndarray:
    """Evolution matrix M of (a, a*, b, b*) fluctuations, angular units.

    ``coupling_hz`` may be complex to carry the mean-field phase; the
    cavity-sector response is invariant under the sign (b-gauge) of the
    coupling.
    """
    a = params.angular
    g = TWO_PI * complex(coupling_hz)
    dt = hz_to_angular(delta_eff_hz)
    gc = np.conj(g)
    return np.array(
        [
            [1j * dt - 0.5 * a.kappa, 0.0, -1j * g, -1j * g],
            [0.0, -1j * dt - 0.5 * a.kappa, 1j * gc, 1j * gc],
            [-1j * gc, -1j * g, -1j * a.wm - 0.5 * a.gm, 0.0],
            [1j * gc, 1j * g, 0.0, 1j * a.wm - 0.5 * a.gm],
        ],
        dtype=complex,
    )


def eigen_gap_hz(m: np.ndarray) -> float:
    """Difference of the two positive eigenmode frequencies of M, in Hz."""
    lam = np.linalg.eigvals(m)
    pos = np.sort(lam.imag[lam.imag > 0.0])
    if len(pos) < 2:
        return 0.0
    return float((pos[-1] - pos[0]) / TWO_PI)


def _b_column(m: np.ndarray, omega: float, col: int) -> np.ndarray:
    """Column of B(omega) = (-i omega I - M)^-1."""
    lhs = -1j * omega * np.eye(4) - m
    rhs = np.zeros(4, dtype=complex)
    rhs[col] = 1.0
    return np.linalg.solve(lhs, rhs)


def _particular(m: np.ndarray, omega: float, sp: float):
    """Particular-solution coefficients of e^{-i Omega t} and e^{+i Omega t}.

    The probe drives the a-row with -i S_p e^{-i Omega t} and the a*-row
    with +i S_p e^{+i Omega t}."""
    pm = -1j * sp * _b_column(m, omega, 0)
    pp = 1j * sp * _b_column(m, -omega, 1)
    return pm, pp


def _solve_segment(m, t0, t1, omega, sp, v0, sample_ts):
    """Segment states at sample_ts (within [t0, t1]) and the state at t1."""
    pm, pp = _particular(m, omega, sp)

    def part(t):
        return pm * np.exp(-1j * omega * t) + pp * np.exp(1j * omega * t)

    h0 = v0 - part(t0)
    lam, vecs = np.linalg.eig(m)
    out = np.empty((len(sample_ts), 4), dtype=complex)
    if np.linalg.cond(vecs) < CONDITION_LIMIT:
        c = np.linalg.solve(vecs, h0)
        if len(sample_ts):
            expfac = np.exp(np.outer(sample_ts - t0, lam))
            out = (expfac * c) @ vecs.T
            for k, tk in enumerate(sample_ts):
                out[k] += part(tk)
        vend = vecs @ (c * np.exp(lam * (t1 - t0))) + part(t1)
        return out, vend, pp
    # defective M: propagate the homogeneous part by direct integration
    from scipy.integrate import solve_ivp

    clipped = np.clip(sample_ts, t0, t1)  # rounding may push samples past t1
    append_end = len(clipped) == 0 or clipped[-1] < t1 - 1e-15 * max(abs(t1), 1e-9)
    t_eval = np.concatenate([clipped, [t1]]) if append_end else clipped
    sol = solve_ivp(
        lambda t, v: m @ v, (t0, t1), h0, t_eval=t_eval, rtol=1e-10, atol=1e-13
    )
    states = sol.y.T
    for k, tk in enumerate(sample_ts):
        out[k] = states[k] + part(tk)
    vend = states[-1] + part(t1)
    return out, vend, pp


@dataclass
class TransientResponse:
    """Demodulated probe quadratures (units of S_p) plus the raw pump-frame
    cavity amplitude for oracle comparisons."""

    t: np.ndarray
    i_quad: np.ndarray
    q_quad: np.ndarray
    amode_raw: np.ndarray  # pump-frame <a>(t), units of S_p
    segments: List[Tuple[float, float, float]]  # (t_start, g_hz, delta_eff_hz)
    probe_offset_hz: float

    @property
    def magnitude(self) -> np.ndarray:
        return np.hypot(self.i_quad, self.q_quad)


def segment_operating(params: DeviceParams, detuning_hz: float, seg: PulseSegment,
                      sweep: str = "up"):
    """(g_hz, delta_eff_hz) for one pump segment.

    The pulsed-pump convention shifts the detuning by the displaced
    -mechanics term 2 g0^2 n_d / wm alone."""
    if seg.coupling_hz is not None:
        g_hz = seg.coupling_hz
        n_pump = photons_for_coupling(params.single_photon_coupling_hz, g_hz)
    elif seg.power_w is None or seg.power_w == 0.0:
        return 0.0, detuning_hz
    else:
        from .model import PumpDrive, resolve_operating_point

        pump = PumpDrive(detuning_hz=detuning_hz, power_w=seg.power_w, sweep=sweep)
        op = resolve_operating_point(params, pump)
        g_hz = op.coupling_hz
        n_pump = op.n_pump
    shift = 2.0 * params.single_photon_coupling_hz**2 * n_pump / params.mech_freq_hz
    return g_hz, detuning_hz + shift


def transient_linear_response(
    params: DeviceParams,
    detuning_hz: float,
    schedule: Sequence[PulseSegment],
    probe: ProbeDrive,
    sample_dt: float,
    t_pre: float = 0.0,
    coupling_overrides: Optional[Sequence[complex]] = None,
    delta_eff_overrides: Optional[Sequence[float]] = None,
    sweep: str = "up",
    initial: str = "steady",
) -> TransientResponse:
    """Demodulated probe response I(t), Q(t) through a pump pulse schedule.

    The pump tone sits at ``detuning_hz`` from the bare cavity; each
    schedule segment dresses the fluctuation matrix M with its own
    (g, effective detuning), overridable per segment for oracle
    comparisons (complex coupling carries the mean-field phase).  The
    record starts in the steady probe response of a pump-off span of
    length ``t_pre`` prepended to the schedule (t = 0 marks the first
    schedule segment); ``initial="zero"`` instead starts with no
    fluctuation, modeling a probe switched on at the record start.
    Quadratures are in units of the probe amplitude.
    """
    if probe.amplitude <= 0.0:
        raise ValueError("probe amplitude must be positive")
    if not schedule:
        raise ValueError("schedule must contain at least one segment")
    omega = hz_to_angular(probe.offset_hz - detuning_hz)
    sp = probe.amplitude

    seg_bounds: List[Tuple[float, float, object, int]] = []
    if t_pre > 0.0:
        seg_bounds.append((-t_pre, 0.0, None, -1))
    t0 = 0.0
    for k, seg in enumerate(schedule):
        seg_bounds.append((t0, t0 + seg.duration_s, seg, k))
        t0 += seg.duration_s
    t_end = t0
    n_samples = int(math.floor((t_pre + t_end) / sample_dt + 1e-9)) + 1
    ts = sample_dt * np.arange(n_samples) - t_pre

    states = np.empty((n_samples, 4), dtype=complex)
    demod_corr = np.empty(n_samples, dtype=complex)
    seg_meta: List[Tuple[float, float, float]] = []
    v = None
    idx = 0
    for (start, end, seg, k) in seg_bounds:
        if seg is None:
            g_hz, de_hz = 0.0, detuning_hz
        else:
            g_hz, de_hz = segment_operating(params, detuning_hz, seg, sweep)
        coupling = g_hz
        if seg is not None and coupling_overrides is not None:
            coupling = coupling_overrides[k]
        if seg is not None and delta_eff_overrides is not None:
            de_hz = delta_eff_overrides[k]
        m = build_m(params, coupling, de_hz)
        seg_meta.append((start, abs(complex(coupling)), de_hz))
        if v is None:
            if initial == "zero":
                v = np.zeros(4, dtype=complex)
            else:
                pm, pp = _particular(m, omega, sp)
                v = pm * np.exp(-1j * omega * start) + pp * np.exp(1j * omega * start)
        in_seg = []
        while idx < n_samples and ts[idx] <= end + 1e-12 * max(abs(end), 1e-6):
            in_seg.append(ts[idx])
            idx += 1
        seg_states, v, pp = _solve_segment(m, start, end, omega, sp, v, np.array(in_seg))
        lo = idx - len(in_seg)
        states[lo:idx] = seg_states
        demod_corr[lo:idx] = pp[0] * np.exp(2j * omega * ts[lo:idx])
    amode = states[:, 0]
    demod = amode * np.exp(1j * omega * ts) - demod_corr
    scale = math.sqrt(params.angular.ke2) / sp
    demod = demod * scale
    return TransientResponse(
        t=ts,
        i_quad=demod.real,
        q_quad=demod.imag,
        amode_raw=amode / sp,
        segments=seg_meta,
        probe_offset_hz=probe.offset_hz,
    )


@dataclass
class LinearNonlinearComparison:
    t: np.ndarray
    amode_linear: np.ndarray  # probe response per unit S_p, pump frame
    amode_nonlinear: np.ndarray
    max_deviation: float  # max quadrature error / max |linear response|


def compare_linear_nonlinear(
    params: DeviceParams,
    pump,
    probe_offset_hz: float,
    probe_ratio: float = 1e-3,
    t_span: float = 20e-6,
    sample_dt: float = 5e-9,
    rtol: float = 1e-10,
    atol: float = 1e-13,
) -> LinearNonlinearComparison:
    """Probe-step response: linearized solution vs the full integrator.

    The pump is constant and settled (the system starts at its fixed
    point); the probe switches on at t = 0 with amplitude
    ``probe_ratio`` times the pump drive.  The nonlinear probe response is
    the difference between pump+probe and pump-only runs, per unit probe
    amplitude, compared against the linear solution built from the exact
    complex mean field.  Requires a Kerr-free cavity (the linear model
    carries no Kerr terms).
    """
    from .dynamics import ProbeDrive as _Probe, integrate
    from .model import resolve_operating_point

    if params.cavity_kerr_hz != 0.0:
        raise ValueError("linear/nonlinear comparison requires cavity_kerr_hz = 0")
    op = resolve_operating_point(params, pump)
    x0, y0, p0, q0 = op.fixed_point
    alpha = complex(x0, y0)
    g_complex = params.single_photon_coupling_hz * alpha  # Hz, carries phase
    delta_eff_hz = pump.detuning_hz + 2.0 * params.single_photon_coupling_hz * p0
    sp = probe_ratio * pump.drive_amplitude(params)
    if sp <= 0.0:
        raise ValueError("pump drive must be nonzero")
    seg = PulseSegment(duration_s=t_span, coupling_hz=op.coupling_hz)
    lin = transient_linear_response(
        params,
        pump.detuning_hz,
        [seg],
        ProbeDrive(offset_hz=probe_offset_hz, amplitude=sp),
        sample_dt=sample_dt,
        coupling_overrides=[g_complex],
        delta_eff_overrides=[delta_eff_hz],
        initial="zero",
    )
    state0 = np.array(op.fixed_point)
    probe = _Probe(offset_hz=probe_offset_hz, amplitude=sp)
    traj_b = integrate(params, pump, state0, t_span, sample_dt, rtol=rtol, atol=atol, probe=probe)
    traj_a = integrate(params, pump, state0, t_span, sample_dt, rtol=rtol, atol=atol)
    delta_a = (traj_b.cavity_field() - traj_a.cavity_field()) / sp
    n = min(len(delta_a), len(lin.amode_raw))
    lin_a = lin.amode_raw[:n]
    nl_a = delta_a[:n]
    scale = float(np.max(np.abs(lin_a)))
    dev = max(
        float(np.max(np.abs(nl_a.real - lin_a.real))),
        float(np.max(np.abs(nl_a.imag - lin_a.imag))),
    ) / scale
    return LinearNonlinearComparison(
        t=lin.t[:n], amode_linear=lin_a, amode_nonlinear=nl_a, max_deviation=dev
    )


def fringe_frequency_hz(
    t: np.ndarray,
    magnitude: np.ndarray,
    band_hz: Tuple[float, float],
) -> float:
    """Dominant oscillation frequency of a windowed magnitude record.

    The record is detrended, Hann-windowed and Fourier transformed; the
    strongest in-band bin is refined by the parabolic vertex.  Reads the
    coherent-exchange fringe rate off R(t)."""
    if len(t) < 8:
        raise ValueError("record too short")
    dt = t[1] - t[0]
    sig = magnitude - np.mean(magnitude)
    win = np.hanning(len(sig))
    spec = np.abs(np.fft.rfft(sig * win))
    freqs = np.fft.rfftfreq(len(sig), dt)
    sel = (freqs >= band_hz[0]) & (freqs <= band_hz[1])
    if not np.any(sel):
        raise ValueError("band contains no FFT bins")
    isel = np.nonzero(sel)[0]
    j = isel[np.argmax(spec[isel])]
    shift = 0.0
    if 0 < j < len(spec) - 1:
        y0, y1, y2 = spec[j - 1], spec[j], spec[j + 1]
        den = y0 - 2 * y1 + y2
        if den != 0.0:
            shift = 0.5 * (y0 - y2) / den
    return float((j + shift) * (freqs[1] - freqs[0]))


def envelope_decay_rate(
    t: np.ndarray,
    magnitude: np.ndarray,
    steady: Optional[float] = None,
) -> float:
    """Exponential decay rate (1/s) of the oscillation envelope.

    Fits a line to the log of the peaks of |R(t) - steady| (steady
    defaults to the final sample), which tracks the fringe envelope while
    ignoring the fringe oscillation itself."""
    if steady is None:
        steady = float(magnitude[-1])
    dev = np.abs(magnitude - steady)
    peaks, _ = find_peaks(dev)
    if len(peaks) < 4:
        env = np.abs(hilbert(magnitude - np.mean(magnitude)))
        peaks = np.arange(len(env) // 10, len(env) * 9 // 10)
        dev = env
    tt = t[peaks]
    vv = dev[peaks]
    keep = vv > np.max(vv) * 1e-4
    tt, vv = tt[keep], vv[keep]
    if len(tt) < 3:
        raise ValueError("too few envelope points for a decay fit")
    slope, _ = np.polyfit(tt, np.log(vv), 1)
    return float(-slope)
