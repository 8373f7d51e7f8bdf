"""Nonlinear time evolution, output spectra, and response classification.

The full equations of motion are integrated with an adaptive embedded
Runge-Kutta 5(4) pair (dense output on a uniform grid); the complex
cavity output field feeds a Welch spectral estimate whose comb structure
classifies the response as static, self-oscillating, period-doubled or
-tripled, or chaotic.  A tangent-space (Benettin) propagator estimates
the largest Lyapunov exponent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
from scipy import signal as sps

from . import _integrators as integ
from .model import (
    DeviceParams,
    PumpDrive,
    hz_to_angular,
    resolve_operating_point,
)

STATIC = "static"
SELF_OSCILLATION = "self_oscillation"
PERIOD_2 = "period_2"
PERIOD_3 = "period_3"
CHAOS = "chaos"


class IntegrationError(RuntimeError):
    def __init__(self, message, t_fail=None):
        super().__init__(message)
        self.t_fail = t_fail


class AmbiguousClassification(ValueError):
    """Neither a comb nor a flat spectrum won; carries the top candidates."""

    def __init__(self, candidates):
        super().__init__(f"ambiguous response, top candidates: {candidates}")
        self.candidates = candidates


@dataclass(frozen=True)
class PulseSegment:
    """One piecewise-constant span of the pump schedule.

    Pump strength is given as power (W) or directly as a coupling target
    (Hz); both None means pump off.
    """

    duration_s: float
    power_w: Optional[float] = None
    coupling_hz: Optional[float] = None

    def __post_init__(self):
        if self.duration_s <= 0.0 or not math.isfinite(self.duration_s):
            raise ValueError("segment duration must be positive and finite")
        if self.power_w is not None and self.coupling_hz is not None:
            raise ValueError("give segment power or coupling, not both")


@dataclass(frozen=True)
class ProbeDrive:
    """Weak probe tone at cavity_freq + offset_hz with amplitude in the
    same rad/s sqrt(photon) units as the pump drive."""

    offset_hz: float
    amplitude: float = 1.0


@dataclass
class Trajectory:
    t: np.ndarray
    states: np.ndarray  # (N, 4) quadratures (x, y, p, q)
    steps: int
    rejected: int
    nfev: int
    max_error: float
    error_accum: float

    @property
    def x(self):
        return self.states[:, 0]

    @property
    def y(self):
        return self.states[:, 1]

    @property
    def p(self):
        return self.states[:, 2]

    @property
    def q(self):
        return self.states[:, 3]

    def cavity_field(self) -> np.ndarray:
        return self.states[:, 0] + 1j * self.states[:, 1]


def eom_rhs(
    state: Sequence[float],
    params: DeviceParams,
    pump: PumpDrive,
    t: float = 0.0,
    probe: Optional[ProbeDrive] = None,
) -> np.ndarray:
    """f1..f4 in angular units; reference (non-jitted) implementation."""
    a = params.angular
    x, y, p, q = (float(v) for v in state)
    delta = hz_to_angular(pump.detuning_hz)
    e = pump.drive_amplitude(params)
    er, ei = e, 0.0
    if probe is not None and probe.amplitude != 0.0:
        om = _probe_omega(params, pump, probe)
        er -= probe.amplitude * math.sin(om * t)
        ei = -probe.amplitude * math.cos(om * t)
    n = x * x + y * y
    return np.array(
        [
            -0.5 * a.kappa * x - delta * y - 2.0 * a.g0 * p * y - a.ac * y * n + er,
            delta * x - 0.5 * a.kappa * y + 2.0 * a.g0 * p * x + a.ac * x * n + ei,
            -0.5 * a.gm * p + a.wm * q,
            a.g0 * n - a.wm * p - 0.5 * a.gm * q,
        ]
    )


def _probe_omega(params: DeviceParams, pump: PumpDrive, probe: ProbeDrive) -> float:
    """Probe offset from the pump tone, rad/s."""
    return hz_to_angular(probe.offset_hz - pump.detuning_hz)


def default_sample_dt(params: DeviceParams, pump: PumpDrive) -> float:
    """Resolve the fastest scale: 1/(20 max(|detuning|, wm, 2g))."""
    op = resolve_operating_point(params, pump)
    fmax = max(abs(pump.detuning_hz), params.mech_freq_hz, 2.0 * op.coupling_hz)
    return 1.0 / (20.0 * fmax)


def _segment_drive(params: DeviceParams, detuning_hz: float, seg: PulseSegment, sweep: str):
    if seg.coupling_hz is not None:
        from .model import photons_for_coupling

        n = photons_for_coupling(params.single_photon_coupling_hz, seg.coupling_hz)
        a = params.angular
        delta = hz_to_angular(detuning_hz)
        wm_eff = a.wm + a.gm**2 / (4.0 * a.wm)
        p_bar = a.g0 * n / wm_eff
        b_slope = 2.0 * a.g0 + (a.ac / a.g0) * wm_eff if a.g0 > 0 else 0.0
        a_eff = delta + b_slope * p_bar
        return math.sqrt(n * (a_eff**2 + a.kappa**2 / 4.0))
    if seg.power_w is None or seg.power_w == 0.0:
        return 0.0
    pump = PumpDrive(detuning_hz=detuning_hz, power_w=seg.power_w, sweep=sweep)
    return pump.drive_amplitude(params)


def integrate(
    params: DeviceParams,
    pump: PumpDrive,
    state0: Sequence[float],
    t_span: float,
    sample_dt: Optional[float] = None,
    rtol: float = 1e-9,
    atol: float = 1e-12,
    probe: Optional[ProbeDrive] = None,
    schedule: Optional[List[PulseSegment]] = None,
    max_steps: int = 50_000_000,
    fixed_h: float = 0.0,
) -> Trajectory:
    """Integrate the equations of motion over [0, t_span].

    ``pump`` fixes the detuning (and the drive, unless ``schedule`` gives a
    piecewise-constant pump amplitude per segment).  Dense output lands on
    the uniform ``sample_dt`` grid regardless of internal adaptive steps.
    Raises IntegrationError on step-size underflow, non-finite states, or
    step-budget exhaustion, carrying the failure time.
    """
    a = params.angular
    if sample_dt is None:
        sample_dt = default_sample_dt(params, pump)
    n_samples = int(math.floor(t_span / sample_dt + 1e-9)) + 1
    ts = sample_dt * np.arange(n_samples)
    out = np.empty((n_samples, 4))
    y = np.array([float(v) for v in state0])
    if y.shape != (4,):
        raise ValueError("state0 must have 4 components (x, y, p, q)")
    delta = hz_to_angular(pump.detuning_hz)
    sp_amp = 0.0
    sp_om = 0.0
    if probe is not None and probe.amplitude != 0.0:
        sp_amp = probe.amplitude
        sp_om = _probe_omega(params, pump, probe)
    if schedule is None:
        segments = [(0.0, t_span, pump.drive_amplitude(params))]
    else:
        segments = []
        t0 = 0.0
        for seg in schedule:
            e_seg = _segment_drive(params, pump.detuning_hz, seg, pump.sweep)
            segments.append((t0, min(t0 + seg.duration_s, t_span), e_seg))
            t0 += seg.duration_s
            if t0 >= t_span:
                break
        if t0 < t_span:
            segments.append((t0, t_span, segments[-1][2] if segments else 0.0))
    steps = rejected = nfev = 0
    max_err = err_accum = 0.0
    isamp = 0
    # first trial step: a fraction of the fastest linear period
    w_fast = max(a.wm, a.kappa, abs(delta), 1.0 / t_span)
    h_last = min(sample_dt / 4.0, 0.2 / w_fast)
    for (t0, t1, e_pump) in segments:
        if t1 <= t0:
            continue
        status, t_reached, st, rj, nf, me, ea, isamp, h_last = integ.dp45_core(
            0,
            y,
            t0,
            t1,
            a.kappa,
            a.gm,
            a.wm,
            delta,
            a.g0,
            a.ac,
            e_pump,
            sp_amp,
            sp_om,
            rtol,
            atol,
            min(h_last, sample_dt / 4.0) if fixed_h <= 0.0 else fixed_h,
            fixed_h,
            max_steps,
            ts,
            out,
            isamp,
        )
        steps += st
        rejected += rj
        nfev += nf
        max_err = max(max_err, me)
        err_accum += ea
        if status == integ.STEP_UNDERFLOW:
            raise IntegrationError(f"step size underflow at t = {t_reached:.6e} s", t_reached)
        if status == integ.NONFINITE:
            raise IntegrationError(f"state blew up (non-finite) at t = {t_reached:.6e} s", t_reached)
        if status == integ.MAX_STEPS:
            raise IntegrationError(f"exceeded {max_steps} steps at t = {t_reached:.6e} s", t_reached)
    return Trajectory(ts, out, steps, rejected, nfev, max_err, err_accum)


@dataclass
class Psd:
    """Single-sided power spectral density of the complex output field."""

    freq_hz: np.ndarray
    density: np.ndarray
    df: float
    fs: float
    nperseg: int
    window: str
    total_power: float  # mean |s|^2 of the analyzed record


def output_psd(
    traj: Trajectory,
    params: DeviceParams,
    transient_fraction: float = 0.5,
    segments: int = 4,
    overlap: float = 0.5,
    window: str = "hann",
) -> Psd:
    """Welch PSD of the output field sqrt(ke2) (x + iy) after trimming.

    The pump-frame field is complex, so the two-sided estimate is folded
    to a single-sided density; Parseval holds to the usual Welch bias.
    Requires at least 8 mechanical periods after the trim.
    """
    if not 0.0 <= transient_fraction < 1.0:
        raise ValueError("transient_fraction must be in [0, 1)")
    i0 = int(len(traj.t) * transient_fraction)
    s = math.sqrt(params.angular.ke2) * traj.cavity_field()[i0:]
    dt = traj.t[1] - traj.t[0]
    if (len(s) - 1) * dt < 8.0 / params.mech_freq_hz:
        raise ValueError("record too short: need >= 8 mechanical periods after trim")
    fs = 1.0 / dt
    nperseg = int(len(s) / (1.0 + (segments - 1) * (1.0 - overlap)))
    nperseg = max(nperseg, 8)
    freqs, pxx = sps.welch(
        s,
        fs=fs,
        window=window,
        nperseg=nperseg,
        noverlap=int(nperseg * overlap),
        detrend=False,
        return_onesided=False,
        scaling="density",
    )
    order = np.argsort(freqs)
    freqs = freqs[order]
    pxx = pxx[order].real
    # fold to single-sided
    pos = freqs > 0
    neg = freqs < 0
    f_pos = freqs[pos]
    p_fold = pxx[pos].copy()
    p_neg = pxx[neg][::-1]
    m = min(len(p_fold), len(p_neg))
    p_fold[:m] += p_neg[:m]
    f_out = np.concatenate(([0.0], f_pos))
    p_out = np.concatenate(([pxx[freqs == 0.0][0] if np.any(freqs == 0.0) else 0.0], p_fold))
    df = fs / nperseg
    return Psd(
        freq_hz=f_out,
        density=p_out,
        df=df,
        fs=fs,
        nperseg=nperseg,
        window=window,
        total_power=float(np.mean(np.abs(s) ** 2)),
    )


@dataclass(frozen=True)
class ClassifierThresholds:
    """Decision constants for the comb/flatness classifier."""

    flatness: float = 0.25
    comb_score: float = 0.5
    subharmonic_fraction: float = 0.02
    static_floor: float = 1e-8
    band_mult: float = 2.0
    bin_tol: int = 1
    carrier_bins: int = 3  # window leakage of the pump-frame carrier


@dataclass
class ResponseClass:
    label: str
    comb_spacing_hz: Optional[float]
    flatness: float
    scores: dict


def _refine_line(psd: Psd, nominal_hz: float, rel_window: float = 0.015) -> float:
    """Strongest bin near a nominal line, parabola-refined to sub-bin."""
    half = max(3, int(round(rel_window * nominal_hz / psd.df)))
    idx0 = int(round(nominal_hz / psd.df))
    lo, hi = max(idx0 - half, 1), min(idx0 + half + 1, len(psd.density))
    if hi <= lo:
        return nominal_hz
    j = lo + int(np.argmax(psd.density[lo:hi]))
    shift = 0.0
    if 0 < j < len(psd.density) - 1:
        y0, y1, y2 = psd.density[j - 1], psd.density[j], psd.density[j + 1]
        den = y0 - 2 * y1 + y2
        if den != 0.0:
            shift = 0.5 * (y0 - y2) / den
    # the vertex of a true peak lies within the bin; a flat neighborhood
    # can produce a wild extrapolation
    shift = min(max(shift, -1.0), 1.0)
    return (j + shift) * psd.df


def _comb_power(psd: Psd, spacing_hz: float, f_max: float, bin_tol: int,
                min_bin: int, skip=None) -> float:
    """Power captured within +-bin_tol bins of harmonics k*spacing."""
    if spacing_hz < psd.df:  # no resolvable comb at sub-bin spacing
        return 0.0
    total = 0.0
    nbins = len(psd.freq_hz)
    for k in range(1, int(f_max / spacing_hz) + 1):
        if skip is None or (k % skip) != 0:
            idx = int(round(k * spacing_hz / psd.df))
            lo = max(idx - bin_tol, min_bin)
            hi = min(idx + bin_tol + 1, nbins)
            if lo < hi:
                total += float(np.sum(psd.density[lo:hi]))
    return total


def spectral_flatness(psd: Psd, f_max: float, exclude_bins: int = 3) -> float:
    """Geometric/arithmetic mean ratio over the band, skipping the carrier."""
    sel = (psd.freq_hz > (exclude_bins + 0.5) * psd.df) & (psd.freq_hz <= f_max)
    vals = psd.density[sel]
    if vals.size == 0:
        return 0.0
    vals = np.maximum(vals, np.max(vals) * 1e-300)
    return float(np.exp(np.mean(np.log(vals))) / np.mean(vals))


def classify_response(
    psd: Psd,
    mech_freq_hz: float,
    thresholds: ClassifierThresholds = ClassifierThresholds(),
) -> ResponseClass:
    """Classify a response from its comb structure.

    The fundamental spacing is picked among {wm, wm/2, wm/3} by harmonic
    -grid correlation (each grid anchored to the refined line nearest its
    nominal spacing); subharmonic combs must put a minimum fraction of the
    AC power on lines absent from the wm grid.  Chaos requires a flat
    spectrum with no winning comb; static means the AC power is negligible
    against the carrier.  Raises AmbiguousClassification when no rule wins.
    """
    if psd.df > mech_freq_hz / 12.0:
        raise ValueError("PSD resolution must be finer than wm/12")
    th = thresholds
    f_max = th.band_mult * mech_freq_hz
    cb = th.carrier_bins
    carrier = float(np.sum(psd.density[: cb + 1])) * psd.df
    band = (psd.freq_hz > (cb + 0.5) * psd.df) & (psd.freq_hz <= f_max)
    ac_power = float(np.sum(psd.density[band])) * psd.df
    if ac_power <= th.static_floor * max(carrier, 1e-300):
        return ResponseClass(
            STATIC, None, 0.0, {"ac_fraction": ac_power / max(carrier, 1e-300)}
        )

    s1 = _refine_line(psd, mech_freq_hz)
    s2 = _refine_line(psd, mech_freq_hz / 2.0)
    s3 = _refine_line(psd, mech_freq_hz / 3.0)
    bt = th.bin_tol
    min_bin = cb + 1
    p1 = _comb_power(psd, s1, f_max, bt, min_bin) * psd.df
    p2 = _comb_power(psd, s2, f_max, bt, min_bin) * psd.df
    p3 = _comb_power(psd, s3, f_max, bt, min_bin) * psd.df
    p2_odd = _comb_power(psd, s2, f_max, bt, min_bin, skip=2) * psd.df
    p3_extra = _comb_power(psd, s3, f_max, bt, min_bin, skip=3) * psd.df
    scores = {
        "comb_wm": p1 / ac_power,
        "comb_wm_2": p2 / ac_power,
        "comb_wm_3": p3 / ac_power,
        "subharmonic_wm_2": p2_odd / ac_power,
        "subharmonic_wm_3": p3_extra / ac_power,
    }
    flat = spectral_flatness(psd, f_max, exclude_bins=cb)
    best_comb = max(scores["comb_wm"], scores["comb_wm_2"], scores["comb_wm_3"])
    if flat > th.flatness and best_comb < th.comb_score:
        return ResponseClass(CHAOS, None, flat, scores)
    if (
        scores["subharmonic_wm_3"] >= th.subharmonic_fraction
        and scores["comb_wm_3"] >= th.comb_score
    ):
        return ResponseClass(PERIOD_3, s3, flat, scores)
    if (
        scores["subharmonic_wm_2"] >= th.subharmonic_fraction
        and scores["comb_wm_2"] >= th.comb_score
    ):
        return ResponseClass(PERIOD_2, s2, flat, scores)
    if scores["comb_wm"] >= th.comb_score:
        return ResponseClass(SELF_OSCILLATION, s1, flat, scores)
    ranked = sorted(scores.items(), key=lambda kv: kv[1], reverse=True)
    raise AmbiguousClassification(ranked[:2] + [("flatness", flat)])


@dataclass
class LyapunovResult:
    exponent: float  # 1/s
    stderr: float
    history: np.ndarray  # running estimate vs time
    t_total: float


def lyapunov_max(
    params: DeviceParams,
    pump: PumpDrive,
    t_span: float,
    t_transient: Optional[float] = None,
    renorm_interval: Optional[float] = None,
    rtol: float = 1e-9,
    atol: float = 1e-12,
    seed: int = 0,
    state0: Optional[Sequence[float]] = None,
) -> LyapunovResult:
    """Largest Lyapunov exponent by tangent propagation with renormalization.

    The trajectory is first relaxed for ``t_transient`` (default: a quarter
    of ``t_span``); the tangent vector then evolves under the analytic
    Jacobian and is renormalized every ``renorm_interval`` (default: two
    mechanical periods).  The standard error comes from block means of the
    per-window log stretches.
    """
    a = params.angular
    if t_transient is None:
        t_transient = 0.25 * t_span
    if renorm_interval is None:
        renorm_interval = 2.0 / params.mech_freq_hz
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x1D]))
    if state0 is None:
        op = resolve_operating_point(params, pump)
        fp = np.array(op.fixed_point)
        kick = rng.standard_normal(4)
        kick *= 1e-3 * max(1.0, np.linalg.norm(fp)) / np.linalg.norm(kick)
        state0 = fp + kick
    if t_transient > 0.0:
        traj = integrate(
            params, pump, state0, t_transient, sample_dt=t_transient / 4.0,
            rtol=rtol, atol=atol,
        )
        y4 = traj.states[-1]
    else:
        y4 = np.array([float(v) for v in state0])
    v = rng.standard_normal(4)
    v /= np.linalg.norm(v)
    y = np.concatenate([y4, v])
    delta = hz_to_angular(pump.detuning_hz)
    e_pump = pump.drive_amplitude(params)
    n_windows = int(round(t_span / renorm_interval))
    logs = np.empty(n_windows)
    times = np.empty(n_windows)
    dummy_ts = np.empty(0)
    dummy_out = np.empty((0, 8))
    h = renorm_interval / 50.0
    t = 0.0
    for w in range(n_windows):
        status, t_r, *_rest, h = integ.dp45_core(
            1, y, t, t + renorm_interval,
            a.kappa, a.gm, a.wm, delta, a.g0, a.ac, e_pump, 0.0, 0.0,
            rtol, atol, h, 0.0, 50_000_000, dummy_ts, dummy_out, 0,
        )
        if status != integ.OK:
            raise IntegrationError(f"tangent propagation failed at t = {t_r:.3e}", t_r)
        t += renorm_interval
        norm = np.linalg.norm(y[4:])
        if norm == 0.0 or not np.isfinite(norm):
            raise IntegrationError("tangent vector norm degenerate", t)
        logs[w] = np.log(norm)
        y[4:] /= norm
        times[w] = t
    history = np.cumsum(logs) / times
    # discard the alignment transient (first quarter), then block averages
    keep = logs[n_windows // 4 :]
    rates = keep / renorm_interval
    n_blocks = max(4, min(16, len(rates) // 8))
    blocks = np.array_split(rates, n_blocks)
    means = np.array([b.mean() for b in blocks])
    exponent = float(rates.mean())
    stderr = float(means.std(ddof=1) / math.sqrt(len(means))) if len(means) > 1 else math.inf
    return LyapunovResult(exponent, stderr, history, t_span)


def __getattr__(name):
    # transient-response machinery lives in its own file; keep it reachable
    # from here since it is part of the same time-domain toolkit
    if name in (
        "transient_linear_response",
        "build_m",
        "eigen_gap_hz",
        "fringe_frequency_hz",
        "envelope_decay_rate",
        "TransientResponse",
        "segment_operating",
    ):
        from . import transient

        return getattr(transient, name)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")


@dataclass
class CellResponse:
    label: str
    comb_spacing_hz: Optional[float]
    flatness: float


def classify_cell(
    params: DeviceParams,
    detuning_hz: float,
    power_w: float,
    sweep: str,
    seed: int,
    col: int,
    row: int,
    t_span: float,
    sample_dt: Optional[float] = None,
    rtol: float = 1e-9,
    atol: float = 1e-12,
    thresholds: ClassifierThresholds = ClassifierThresholds(),
    transient_fraction: float = 0.5,
    occupied_fp: Optional[np.ndarray] = None,
    ambiguous_ok: bool = True,
) -> CellResponse:
    """Integrate one (detuning, power) cell from its occupied fixed point
    plus a deterministic kick and classify the steady response.

    Quasi-periodic states fall outside the comb taxonomy; with
    ``ambiguous_ok`` they are recorded as label "ambiguous" instead of
    raising.
    """
    pump = PumpDrive(detuning_hz=detuning_hz, power_w=power_w, sweep=sweep)
    if occupied_fp is None:
        op = resolve_operating_point(params, pump)
        occupied_fp = np.array(op.fixed_point)
    rng = np.random.default_rng(np.random.SeedSequence([seed, col, row]))
    kick = rng.standard_normal(4)
    kick *= 1e-3 * max(1.0, np.linalg.norm(occupied_fp)) / np.linalg.norm(kick)
    state0 = occupied_fp + kick
    traj = integrate(params, pump, state0, t_span, sample_dt, rtol=rtol, atol=atol)
    psd = output_psd(traj, params, transient_fraction=transient_fraction)
    try:
        res = classify_response(psd, params.mech_freq_hz, thresholds)
    except AmbiguousClassification as exc:
        if not ambiguous_ok:
            raise
        flat = next((v for k, v in exc.candidates if k == "flatness"), 0.0)
        return CellResponse("ambiguous", None, float(flat))
    return CellResponse(res.label, res.comb_spacing_hz, res.flatness)
