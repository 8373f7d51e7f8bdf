import numpy as np
import pytest

from omcavity import dynamics, model, transient

WM = 6.32e6


def _pulse(g_hz, on_s=15e-6, off_s=10e-6):
    return [dynamics.PulseSegment(duration_s=on_s, coupling_hz=g_hz),
            dynamics.PulseSegment(duration_s=off_s)]


def test_bare_cavity_ring_rates(paper):
    # pump-off segments: the probe rings the bare cavity at kappa/2
    probe = dynamics.ProbeDrive(offset_hz=300e3, amplitude=1.0)
    sched = [dynamics.PulseSegment(duration_s=20e-6)]
    resp = transient.transient_linear_response(
        paper, -7.5e6, sched, probe, sample_dt=4e-9, initial="zero")
    r = resp.magnitude
    r_ss = r[-1]
    dev = np.abs(r - r_ss)
    sel = (resp.t > 1e-6) & (resp.t < 12e-6)
    rate = transient.envelope_decay_rate(resp.t[sel], r[sel], steady=r_ss)
    assert rate == pytest.approx(paper.angular.kappa / 2, rel=0.01)


def test_linearity_in_probe_amplitude(paper):
    sched = _pulse(1.0e6)
    r1 = transient.transient_linear_response(
        paper, -7.1e6, sched, dynamics.ProbeDrive(372e3, 1.0), sample_dt=1e-8)
    r2 = transient.transient_linear_response(
        paper, -7.1e6, sched, dynamics.ProbeDrive(372e3, 2.0), sample_dt=1e-8)
    # quadratures are reported per unit probe amplitude
    assert np.allclose(r1.i_quad, r2.i_quad, rtol=1e-9, atol=1e-18)
    assert np.allclose(r1.q_quad, r2.q_quad, rtol=1e-9, atol=1e-18)


def test_segment_continuity(paper):
    probe = dynamics.ProbeDrive(offset_hz=372e3, amplitude=1.0)
    resp = transient.transient_linear_response(
        paper, -7.5215e6, _pulse(1.55e6), probe, sample_dt=2e-9, t_pre=2e-6)
    r = np.abs(resp.amode_raw)
    # no jumps at segment boundaries: compare adjacent samples across t=0
    for t_edge in (0.0, 15e-6):
        i = np.searchsorted(resp.t, t_edge)
        jump = abs(resp.amode_raw[i] - resp.amode_raw[i - 1])
        local = np.median(np.abs(np.diff(resp.amode_raw[max(i - 40, 1):i + 40])))
        assert jump < 20 * local + 1e-12


def test_defective_fallback_matches_eigen_path(paper, monkeypatch):
    probe = dynamics.ProbeDrive(offset_hz=372e3, amplitude=1.0)
    sched = _pulse(1.2e6, on_s=6e-6, off_s=4e-6)
    ref = transient.transient_linear_response(
        paper, -7.2e6, sched, probe, sample_dt=1e-8)
    monkeypatch.setattr(transient, "CONDITION_LIMIT", 0.0)  # force fallback
    alt = transient.transient_linear_response(
        paper, -7.2e6, sched, probe, sample_dt=1e-8)
    scale = np.max(np.abs(ref.amode_raw))
    assert np.max(np.abs(ref.amode_raw - alt.amode_raw)) < 1e-6 * scale


def test_eigen_gap_against_normal_mode_formula(paper_nokerr):
    # undamped closed form; damping attraction scales as ((kappa/4)/g)^2
    for s, tol in ((0.2, 0.02), (0.49, 0.004), (0.74, 0.002)):
        g = 0.5 * s * WM
        gap = transient.eigen_gap_hz(transient.build_m(paper_nokerr, g, -WM))
        expected = WM * (np.sqrt(1 + s) - np.sqrt(1 - s))
        assert gap == pytest.approx(expected, rel=tol)


def test_swap_fringe_and_decay_rates(paper):
    # the acceptance-3 configuration, asserted here at module level
    g = 1.55e6
    n_d = model.photons_for_coupling(165.0, g)
    shift = model.total_static_shift(n_d, 165.0, WM, paper.cavity_kerr_hz)
    det = -WM - shift
    probe = dynamics.ProbeDrive(offset_hz=372e3, amplitude=1.0)
    resp = transient.transient_linear_response(
        paper, det, _pulse(g), probe, sample_dt=5e-9, t_pre=5e-6)
    r = resp.magnitude
    sel = (resp.t >= 0.3e-6) & (resp.t <= 12e-6)
    f = transient.fringe_frequency_hz(resp.t[sel], r[sel], (0.15 * WM, 0.9 * WM))
    assert f == pytest.approx(3.1e6, rel=0.05)
    r_ss = float(r[(resp.t > 13e-6) & (resp.t < 15e-6)].mean())
    sel = (resp.t >= 0.3e-6) & (resp.t <= 10e-6)
    rate_on = transient.envelope_decay_rate(resp.t[sel], r[sel], steady=r_ss)
    assert rate_on == pytest.approx(paper.angular.kappa / 4, rel=0.15)
    sel = (resp.t >= 15.2e-6) & (resp.t <= 23e-6)
    rate_off = transient.envelope_decay_rate(resp.t[sel], r[sel], steady=float(r[-1]))
    assert rate_off == pytest.approx(paper.angular.kappa / 2, rel=0.15)


def test_probe_validation(paper):
    with pytest.raises(ValueError, match="probe amplitude"):
        transient.transient_linear_response(
            paper, -7e6, _pulse(1e6), dynamics.ProbeDrive(372e3, 0.0), 1e-8)
    with pytest.raises(ValueError, match="at least one segment"):
        transient.transient_linear_response(
            paper, -7e6, [], dynamics.ProbeDrive(372e3, 1.0), 1e-8)


def test_compare_linear_nonlinear_small_probe(paper_nokerr):
    g = 1.0e6
    op = model.operating_point_for_coupling(paper_nokerr, g, delta_eff_hz=-WM)
    pump = model.PumpDrive(detuning_hz=op.detuning_hz, amplitude=op.drive_amplitude)
    comp = transient.compare_linear_nonlinear(
        paper_nokerr, pump, probe_offset_hz=372e3, probe_ratio=1e-3, t_span=20e-6)
    assert comp.max_deviation < 0.01


def test_compare_requires_kerr_free(paper):
    pump = model.PumpDrive.from_dbm(-7.5e6, -35.0)
    with pytest.raises(ValueError, match="cavity_kerr_hz = 0"):
        transient.compare_linear_nonlinear(paper, pump, 372e3)
