import math

import numpy as np
import pytest

from omcavity import model
from conftest import random_device, random_pump

WM = 6.32e6
G0 = 165.0


def test_total_linewidth_paper_rates(paper):
    assert model.total_linewidth(paper) == pytest.approx(380e3, rel=1e-12)


def test_total_linewidth_arithmetic():
    p = model.DeviceParams(
        cavity_freq_hz=1e9, mech_freq_hz=1e6, input_rate_hz=1.0,
        output_rate_hz=2.0, internal_rate_hz=3.0, mech_damping_hz=1.0,
        single_photon_coupling_hz=1.0)
    assert model.total_linewidth(p) == 6.0


def test_zero_rates_rejected():
    with pytest.raises(ValueError, match="input_rate_hz"):
        model.DeviceParams(
            cavity_freq_hz=1e9, mech_freq_hz=1e6, input_rate_hz=0.0,
            output_rate_hz=2.0, internal_rate_hz=3.0, mech_damping_hz=1.0,
            single_photon_coupling_hz=1.0)


def test_kerr_per_photon_paper_value():
    # 2 * 165^2 / 6.32e6 = 8.6155 mHz/photon
    val = model.optomech_kerr_per_photon(G0, WM)
    assert abs(val - 8.6e-3) < 0.05e-3


def test_kerr_per_photon_scaling_and_zero():
    base = model.optomech_kerr_per_photon(G0, WM)
    assert model.optomech_kerr_per_photon(0.0, WM) == 0.0
    assert model.optomech_kerr_per_photon(2 * G0, WM) == pytest.approx(4 * base, rel=1e-14)
    with pytest.raises(ValueError):
        model.optomech_kerr_per_photon(G0, 0.0)


def test_coupling_rate_and_inversion():
    assert model.coupling_rate(G0, 0.0) == 0.0
    # paper coupling 1.55 MHz needs ~8.8e7 photons (forward-evaluation oracle)
    n = model.photons_for_coupling(G0, 1.55e6)
    assert n == pytest.approx(8.8245e7, rel=1e-3)
    assert model.coupling_rate(G0, n) == pytest.approx(1.55e6, rel=1e-12)
    # 2g = 0.81 wm needs ~2.41e8 photons
    n2 = model.photons_for_coupling(G0, 0.405 * WM)
    assert n2 == pytest.approx(2.406e8, rel=1e-3)
    with pytest.raises(ValueError):
        model.coupling_rate(G0, -1.0)


def test_coupling_inversion_roundtrip_random():
    rng = np.random.default_rng(11)
    for _ in range(200):
        n = 10 ** rng.uniform(0, 10)
        g0 = 10 ** rng.uniform(0, 3)
        back = model.photons_for_coupling(g0, model.coupling_rate(g0, n))
        assert back == pytest.approx(n, rel=1e-12)


def test_static_displacement():
    assert model.static_displacement(0.0, G0, WM) == 0.0
    # 2 * 165 * 1e8 / 6.32e6 = 5221.5 zero-point units
    assert model.static_displacement(1e8, G0, WM) == pytest.approx(5221.5, rel=1e-3)
    assert model.static_displacement(2e8, G0, WM) == pytest.approx(
        2 * model.static_displacement(1e8, G0, WM), rel=1e-14)


def test_total_static_shift():
    assert model.total_static_shift(0.0, G0, WM, 0.005) == 0.0
    # inversion: 8.6155 mHz + 5 mHz per photon reaching 1.76 MHz total
    per_photon = model.optomech_kerr_per_photon(G0, WM) + 5e-3
    n = 1.76e6 / per_photon
    assert n == pytest.approx(1.29e8, rel=5e-3)
    assert model.total_static_shift(n, G0, WM, 5e-3) == pytest.approx(1.76e6, rel=1e-12)
    # alpha_c = 0 reduces to the optomechanical term alone
    assert model.total_static_shift(3e7, G0, WM, 0.0) == pytest.approx(
        model.optomech_kerr_per_photon(G0, WM) * 3e7, rel=1e-14)


def test_dimensionless_power_properties(paper):
    assert model.dimensionless_power(G0, 0.0, WM) == 0.0
    p1 = model.dimensionless_power(G0, 1e9, WM)
    assert model.dimensionless_power(G0, 2e9, WM) == pytest.approx(2 * p1, rel=1e-14)
    with pytest.raises(ValueError):
        model.dimensionless_power(G0, 1e9, 0.0)


def test_dimensionless_power_regression(paper):
    # frozen value: -31 dBm at the cavity, pump parked on resonance
    n0 = model.resonant_photon_number(paper, model.dbm_to_watt(-31.0))
    val = model.dimensionless_power(G0, n0, WM)
    assert val == pytest.approx(3.3844879042550386e-13, rel=1e-9)


def test_pump_photon_number_zero_power(paper):
    pump = model.PumpDrive(detuning_hz=-WM, power_w=0.0)
    assert model.pump_photon_number(paper, pump) == 0.0


def test_pump_photon_number_matches_lorentzian_when_shifts_vanish():
    rng = np.random.default_rng(3)
    for _ in range(1000):
        dev = random_device(rng)
        dev = model.DeviceParams(
            cavity_freq_hz=dev.cavity_freq_hz,
            mech_freq_hz=dev.mech_freq_hz,
            input_rate_hz=dev.input_rate_hz,
            output_rate_hz=dev.output_rate_hz,
            internal_rate_hz=dev.internal_rate_hz,
            mech_damping_hz=dev.mech_damping_hz,
            single_photon_coupling_hz=1e-6,
            cavity_kerr_hz=0.0,
        )
        pump = random_pump(rng, dev)
        n = model.pump_photon_number(dev, pump)
        n_lin = model.pump_photon_number_linear(dev, pump)
        assert n == pytest.approx(n_lin, rel=1e-9)


def test_pump_drive_validation():
    with pytest.raises(ValueError, match="exactly one"):
        model.PumpDrive(detuning_hz=0.0)
    with pytest.raises(ValueError, match="exactly one"):
        model.PumpDrive(detuning_hz=0.0, power_w=1e-9, amplitude=1e3)
    with pytest.raises(ValueError):
        model.PumpDrive(detuning_hz=0.0, power_w=-1.0)
    with pytest.raises(ValueError):
        model.PumpDrive(detuning_hz=0.0, power_w=1e-9, sweep="sideways")
    with pytest.raises(ValueError):
        model.PumpDrive(detuning_hz=math.inf, power_w=1e-9)


def test_drive_amplitude_power_roundtrip(paper):
    pump = model.PumpDrive.from_dbm(-WM, -31.0)
    e = pump.drive_amplitude(paper)
    pump2 = model.PumpDrive(detuning_hz=-WM, amplitude=e)
    assert pump2.injected_power_w(paper) == pytest.approx(
        model.dbm_to_watt(-31.0), rel=1e-12)


def test_unit_roundtrip_lossless():
    rng = np.random.default_rng(5)
    for _ in range(1000):
        f = 10 ** rng.uniform(-3, 10)
        back = model.angular_to_hz(model.hz_to_angular(f))
        assert back == pytest.approx(f, rel=1e-12)
    assert model.dbm_to_watt(0.0) == pytest.approx(1e-3, rel=1e-15)
    assert model.watt_to_dbm(model.dbm_to_watt(-31.0)) == pytest.approx(-31.0, abs=1e-12)


def test_kerr_identity_exact():
    rng = np.random.default_rng(9)
    for _ in range(500):
        g0 = 10 ** rng.uniform(0, 4)
        wm = 10 ** rng.uniform(4, 8)
        val = model.optomech_kerr_per_photon(g0, wm) * wm / (2 * g0 * g0)
        assert abs(val - 1.0) <= 4e-16  # exact identity up to rounding


def test_operating_point_for_coupling_consistency(paper):
    from omcavity import stability

    op = model.operating_point_for_coupling(paper, 1.55e6, delta_eff_hz=-WM)
    pump = model.PumpDrive(detuning_hz=op.detuning_hz, amplitude=op.drive_amplitude)
    pts = stability.fixed_points(paper, pump)
    best = min(pts, key=lambda f: abs(f.n_photons - op.n_pump))
    assert best.n_photons == pytest.approx(op.n_pump, rel=1e-9)
    assert op.delta_eff_hz == pytest.approx(-WM, rel=1e-12)


def test_derive_bundle(paper):
    pump = model.PumpDrive.from_dbm(-7.5215e6, -31.0)
    d = model.derive(paper, pump)
    assert d.coupling_hz == pytest.approx(
        model.coupling_rate(G0, d.n_pump), rel=1e-12)
    assert d.total_static_shift_hz == pytest.approx(
        model.total_static_shift(d.n_pump, G0, WM, paper.cavity_kerr_hz), rel=1e-12)
    assert d.n_pump > 0 and d.n_pump_linear > 0
