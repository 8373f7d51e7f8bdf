import numpy as np
import pytest

from omcavity import dynamics

WM = 6.32e6


def _traj_from_field(field, dt):
    """Wrap a complex series as a Trajectory (x = Re, y = Im)."""
    n = len(field)
    states = np.zeros((n, 4))
    states[:, 0] = field.real
    states[:, 1] = field.imag
    return dynamics.Trajectory(
        t=dt * np.arange(n), states=states, steps=n, rejected=0, nfev=0,
        max_error=0.0, error_accum=0.0)


def _psd_of(field, dt, params, trim=0.0):
    traj = _traj_from_field(field, dt)
    return dynamics.output_psd(traj, params, transient_fraction=trim)


@pytest.fixture(scope="module")
def dev(paper):
    return paper


def _time_base(fs=160e6, n=1 << 16):
    dt = 1.0 / fs
    return dt, dt * np.arange(n)


def test_pure_tone_single_bin(dev):
    dt, t = _time_base()
    f0 = 12.5e6
    psd = _psd_of(np.exp(2j * np.pi * f0 * t), dt, dev)
    peak = np.argmax(psd.density)
    assert abs(psd.freq_hz[peak] - f0) <= psd.df
    # leakage well below the peak a few bins away
    far = np.abs(psd.freq_hz - f0) > 5 * psd.df
    assert np.max(psd.density[far]) < 1e-3 * psd.density[peak]


def test_parseval_consistency(dev):
    rng = np.random.default_rng(51)
    dt, t = _time_base()
    field = (np.exp(2j * np.pi * 5.1e6 * t)
             + 0.4 * np.exp(-2j * np.pi * 11.8e6 * t)
             + 0.2 * (rng.standard_normal(len(t)) + 1j * rng.standard_normal(len(t))))
    psd = _psd_of(field, dt, dev)
    integral = np.sum(psd.density) * psd.df
    assert integral == pytest.approx(psd.total_power, rel=0.01)


def test_record_too_short(dev):
    dt = 1.0 / 160e6
    field = np.exp(2j * np.pi * 5e6 * dt * np.arange(64))
    with pytest.raises(ValueError, match="8 mechanical periods"):
        _psd_of(field, dt, dev)


def _comb_field(t, spacing_hz, harmonics, amp=1.0, carrier=10.0):
    """Phase-modulation comb: carrier plus lines at k*spacing."""
    field = carrier * np.ones_like(t, dtype=complex)
    rng = np.random.default_rng(7)
    for k in range(1, harmonics + 1):
        phase = rng.uniform(0, 2 * np.pi)
        field += amp / k * np.exp(1j * (2 * np.pi * k * spacing_hz * t + phase))
        field += 0.5 * amp / k * np.exp(-1j * (2 * np.pi * k * spacing_hz * t - phase))
    return field


def test_classify_self_oscillation(dev):
    dt, t = _time_base()
    psd = _psd_of(_comb_field(t, WM, 6), dt, dev)
    res = dynamics.classify_response(psd, WM)
    assert res.label == dynamics.SELF_OSCILLATION
    assert res.comb_spacing_hz == pytest.approx(WM, abs=psd.df)


def test_classify_period_2(dev):
    dt, t = _time_base()
    psd = _psd_of(_comb_field(t, WM / 2, 12), dt, dev)
    res = dynamics.classify_response(psd, WM)
    assert res.label == dynamics.PERIOD_2
    assert res.comb_spacing_hz == pytest.approx(WM / 2, abs=psd.df)


def test_classify_period_3(dev):
    dt, t = _time_base()
    psd = _psd_of(_comb_field(t, WM / 3, 18), dt, dev)
    res = dynamics.classify_response(psd, WM)
    assert res.label == dynamics.PERIOD_3
    assert res.comb_spacing_hz == pytest.approx(WM / 3, abs=psd.df)


def test_classify_chaos_band_noise(dev):
    rng = np.random.default_rng(52)
    dt, t = _time_base()
    white = rng.standard_normal(len(t)) + 1j * rng.standard_normal(len(t))
    spec = np.fft.fft(white)
    freqs = np.fft.fftfreq(len(t), dt)
    spec[np.abs(freqs) > 2.2 * WM] = 0.0
    field = 10.0 + np.fft.ifft(spec)
    psd = _psd_of(field, dt, dev)
    res = dynamics.classify_response(psd, WM)
    assert res.label == dynamics.CHAOS
    assert res.comb_spacing_hz is None
    assert res.flatness > 0.25


def test_classify_static(dev):
    dt, t = _time_base()
    field = 10.0 * np.exp(1j * 0.3) * np.ones_like(t, dtype=complex)
    psd = _psd_of(field, dt, dev)
    res = dynamics.classify_response(psd, WM)
    assert res.label == dynamics.STATIC
    assert res.comb_spacing_hz is None


def test_classify_spring_shifted_comb(dev):
    # limit-cycle fundamental pulled off wm by a few bins still reads as wm
    dt, t = _time_base()
    psd = _psd_of(_comb_field(t, WM * 0.998, 6), dt, dev)
    res = dynamics.classify_response(psd, WM)
    assert res.label == dynamics.SELF_OSCILLATION
    assert res.comb_spacing_hz == pytest.approx(0.998 * WM, abs=psd.df)


def test_classify_ambiguous_quasiperiodic(dev):
    # two incommensurate tones: no comb on any wm/k grid, not flat either
    dt, t = _time_base()
    field = (10.0 + np.exp(2j * np.pi * (0.71 * WM) * t)
             + 0.8 * np.exp(2j * np.pi * (1.37 * WM) * t))
    psd = _psd_of(field, dt, dev)
    with pytest.raises(dynamics.AmbiguousClassification) as exc:
        dynamics.classify_response(psd, WM)
    assert len(exc.value.candidates) >= 2


def test_classify_resolution_precondition(dev):
    dt = 1.0 / 160e6
    n = 4096  # resolution coarser than wm/12
    field = np.exp(2j * np.pi * 5e6 * dt * np.arange(n)) + 10.0
    traj = _traj_from_field(field, dt)
    psd = dynamics.output_psd(traj, dev, transient_fraction=0.0)
    if psd.df > WM / 12:
        with pytest.raises(ValueError, match="finer"):
            dynamics.classify_response(psd, WM)


def test_synthetic_suite_full_accuracy(dev):
    """Every synthetic case classifies correctly (the classifier gate)."""
    dt, t = _time_base()
    rng = np.random.default_rng(53)
    cases = []
    for spacing, label in ((WM, dynamics.SELF_OSCILLATION),
                           (WM / 2, dynamics.PERIOD_2),
                           (WM / 3, dynamics.PERIOD_3)):
        for jitter in (1.0, 0.999, 1.001):
            cases.append((_comb_field(t, spacing * jitter, 9), label))
    white = rng.standard_normal(len(t)) + 1j * rng.standard_normal(len(t))
    spec = np.fft.fft(white)
    spec[np.abs(np.fft.fftfreq(len(t), dt)) > 2.3 * WM] = 0.0
    cases.append((5.0 + np.fft.ifft(spec), dynamics.CHAOS))
    cases.append((7.0 * np.ones_like(t, dtype=complex), dynamics.STATIC))
    hits = 0
    for field, label in cases:
        res = dynamics.classify_response(_psd_of(field, dt, dev), WM)
        hits += res.label == label
    assert hits == len(cases)
