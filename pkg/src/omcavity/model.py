"""Device parameters, drive tones, and derived scalar quantities.

All user-facing frequencies and rates are plain Hz (the values one quotes
as omega/2pi).  Internal computations run in angular units (rad/s)
throughout; the ``Angular`` view of a parameter set does the conversion
once so formulas can be written literally.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import NamedTuple, Optional

HBAR = 1.054571817e-34  # J s, the single physical constant used anywhere
TWO_PI = 2.0 * math.pi


def hz_to_angular(f_hz: float) -> float:
    return TWO_PI * f_hz


def angular_to_hz(w: float) -> float:
    return w / TWO_PI


def dbm_to_watt(p_dbm: float) -> float:
    return 1e-3 * 10.0 ** (p_dbm / 10.0)


def watt_to_dbm(p_w: float) -> float:
    if p_w <= 0.0:
        raise ValueError("power must be positive to express in dBm")
    return 10.0 * math.log10(p_w / 1e-3)


class Angular(NamedTuple):
    """Device rates in rad/s, plus the total cavity linewidth."""

    wc: float
    wm: float
    ke1: float
    ke2: float
    ki: float
    kappa: float
    gm: float
    g0: float
    ac: float


@dataclass(frozen=True)
class DeviceParams:
    """Fixed device rates and frequencies, all in Hz (omega/2pi values).

    ``cavity_kerr_hz`` is the nonnegative magnitude of the kinetic-inductance
    Kerr coefficient per photon; the red-shift sign convention is applied
    where the coefficient is used.  ``zero_point_m`` is optional because the
    mechanical mass is not needed anywhere: displacements are reported in
    zero-point units.
    """

    cavity_freq_hz: float
    mech_freq_hz: float
    input_rate_hz: float
    output_rate_hz: float
    internal_rate_hz: float
    mech_damping_hz: float
    single_photon_coupling_hz: float
    cavity_kerr_hz: float = 0.0
    zero_point_m: Optional[float] = None

    def __post_init__(self):
        positive = (
            ("cavity_freq_hz", self.cavity_freq_hz),
            ("mech_freq_hz", self.mech_freq_hz),
            ("input_rate_hz", self.input_rate_hz),
            ("output_rate_hz", self.output_rate_hz),
            ("internal_rate_hz", self.internal_rate_hz),
            ("mech_damping_hz", self.mech_damping_hz),
        )
        for name, value in positive:
            if not (isinstance(value, (int, float)) and math.isfinite(value)):
                raise ValueError(f"{name} must be a finite number, got {value!r}")
            if value <= 0.0:
                raise ValueError(f"{name} must be > 0, got {value!r}")
        # the couplings may vanish (decoupled / Kerr-only limits)
        for name, value in (
            ("single_photon_coupling_hz", self.single_photon_coupling_hz),
            ("cavity_kerr_hz", self.cavity_kerr_hz),
        ):
            if not math.isfinite(value) or value < 0.0:
                raise ValueError(f"{name} must be >= 0 and finite, got {value!r}")
        if self.zero_point_m is not None and self.zero_point_m <= 0.0:
            raise ValueError(f"zero_point_m must be > 0, got {self.zero_point_m!r}")

    @property
    def total_linewidth_hz(self) -> float:
        return self.input_rate_hz + self.output_rate_hz + self.internal_rate_hz

    @property
    def angular(self) -> Angular:
        return Angular(
            wc=hz_to_angular(self.cavity_freq_hz),
            wm=hz_to_angular(self.mech_freq_hz),
            ke1=hz_to_angular(self.input_rate_hz),
            ke2=hz_to_angular(self.output_rate_hz),
            ki=hz_to_angular(self.internal_rate_hz),
            kappa=hz_to_angular(self.total_linewidth_hz),
            gm=hz_to_angular(self.mech_damping_hz),
            g0=hz_to_angular(self.single_photon_coupling_hz),
            ac=hz_to_angular(self.cavity_kerr_hz),
        )

    def with_kerr(self, cavity_kerr_hz: float) -> "DeviceParams":
        return replace(self, cavity_kerr_hz=cavity_kerr_hz)


def paper_device(cavity_kerr_hz: float = 0.005) -> DeviceParams:
    """Device parameter set of the measured sample (SI-table values)."""
    return DeviceParams(
        cavity_freq_hz=4.86e9,
        mech_freq_hz=6.32e6,
        input_rate_hz=90e3,
        output_rate_hz=190e3,
        internal_rate_hz=100e3,
        mech_damping_hz=20.0,
        single_photon_coupling_hz=165.0,
        cavity_kerr_hz=cavity_kerr_hz,
    )


@dataclass(frozen=True)
class PumpDrive:
    """Pump tone: signed detuning from the bare cavity plus one power spec.

    Exactly one of ``power_w`` (injected power at the cavity input, W) or
    ``amplitude`` (drive rate E in rad/s sqrt(photon)) is authoritative; the
    other is derived on demand.  ``sweep`` selects the continuation branch
    in bistable regions ("up" follows the low-photon-number branch).
    """

    detuning_hz: float
    power_w: Optional[float] = None
    amplitude: Optional[float] = None
    sweep: str = "up"

    def __post_init__(self):
        if not math.isfinite(self.detuning_hz):
            raise ValueError("detuning_hz must be finite")
        if (self.power_w is None) == (self.amplitude is None):
            raise ValueError("specify exactly one of power_w or amplitude")
        if self.power_w is not None and (
            not math.isfinite(self.power_w) or self.power_w < 0.0
        ):
            raise ValueError(f"power_w must be >= 0, got {self.power_w!r}")
        if self.amplitude is not None and (
            not math.isfinite(self.amplitude) or self.amplitude < 0.0
        ):
            raise ValueError(f"amplitude must be >= 0, got {self.amplitude!r}")
        if self.sweep not in ("up", "down"):
            raise ValueError(f"sweep must be 'up' or 'down', got {self.sweep!r}")

    @classmethod
    def from_dbm(cls, detuning_hz: float, power_dbm: float, sweep: str = "up"):
        return cls(detuning_hz=detuning_hz, power_w=dbm_to_watt(power_dbm), sweep=sweep)

    def pump_freq_hz(self, params: DeviceParams) -> float:
        return params.cavity_freq_hz + self.detuning_hz

    def drive_amplitude(self, params: DeviceParams) -> float:
        """Drive rate E = sqrt(ke1 * P / (hbar * wd)) in rad/s sqrt(photon)."""
        if self.amplitude is not None:
            return self.amplitude
        wd = hz_to_angular(self.pump_freq_hz(params))
        return math.sqrt(params.angular.ke1 * self.power_w / (HBAR * wd))

    def injected_power_w(self, params: DeviceParams) -> float:
        if self.power_w is not None:
            return self.power_w
        wd = hz_to_angular(self.pump_freq_hz(params))
        return self.amplitude**2 * HBAR * wd / params.angular.ke1


def total_linewidth(params: DeviceParams) -> float:
    """kappa = ke1 + ke2 + ki, in Hz."""
    return params.total_linewidth_hz


def optomech_kerr_per_photon(g0_hz: float, mech_freq_hz: float) -> float:
    """Per-photon cavity shift 2 g0^2 / wm from the displaced mechanics, Hz.

    Returned as a magnitude; the shift is to the red.
    """
    if mech_freq_hz <= 0.0:
        raise ValueError("mech_freq_hz must be > 0")
    return 2.0 * g0_hz * g0_hz / mech_freq_hz


def coupling_rate(g0_hz: float, n_pump: float) -> float:
    """Parametric coupling g = g0 sqrt(n_d), Hz."""
    if n_pump < 0.0:
        raise ValueError("pump photon number must be >= 0")
    return g0_hz * math.sqrt(n_pump)


def photons_for_coupling(g0_hz: float, g_hz: float) -> float:
    """Invert g = g0 sqrt(n_d) for the required pump photon number."""
    if g0_hz <= 0.0:
        raise ValueError("g0 must be > 0")
    return (g_hz / g0_hz) ** 2


def static_displacement(n_pump: float, g0_hz: float, mech_freq_hz: float) -> float:
    """Static mechanical shift x_s = 2 g0 n_d / wm, in zero-point units."""
    if mech_freq_hz <= 0.0:
        raise ValueError("mech_freq_hz must be > 0")
    return 2.0 * g0_hz * n_pump / mech_freq_hz


def total_static_shift(
    n_pump: float, g0_hz: float, mech_freq_hz: float, cavity_kerr_hz: float = 0.0
) -> float:
    """Total static red shift (2 g0^2/wm + alpha_c) n_d of the cavity, Hz."""
    return (optomech_kerr_per_photon(g0_hz, mech_freq_hz) + cavity_kerr_hz) * n_pump


def resonant_photon_number(params: DeviceParams, power_w: float) -> float:
    """Photon number n0 for a pump parked on the (shifted) cavity resonance.

    n0 = ke1 P / (hbar wd) / (kappa^2/4); the Lorentzian denominator is pure
    linewidth because the effective detuning vanishes there.
    """
    a = params.angular
    flux = power_w / (HBAR * a.wc)
    return a.ke1 * flux / (a.kappa**2 / 4.0)


def dimensionless_power(g0_hz: float, n0: float, mech_freq_hz: float) -> float:
    """Evaluate 8 g0^2 n0 / wm^4 literally, in angular units.

    The combination carries residual units of 1/omega^2; it is reported
    only as a labeled axis value, never used in dynamics.
    """
    if mech_freq_hz == 0.0:
        raise ValueError("mech_freq_hz must be nonzero")
    g0 = hz_to_angular(g0_hz)
    wm = hz_to_angular(mech_freq_hz)
    return 8.0 * g0 * g0 * n0 / wm**4


def pump_photon_number_linear(params: DeviceParams, pump: PumpDrive) -> float:
    """Non-self-consistent Lorentzian estimate of the pump photon number."""
    a = params.angular
    e = pump.drive_amplitude(params)
    delta = hz_to_angular(pump.detuning_hz)
    return e * e / (delta * delta + a.kappa**2 / 4.0)


def pump_photon_number(params: DeviceParams, pump: PumpDrive) -> float:
    """Self-consistent pump photon number at the occupied fixed point.

    Includes the optomechanical and kinetic-inductance static shifts; the
    branch in bistable regions follows ``pump.sweep``.
    """
    op = resolve_operating_point(params, pump)
    return op.n_pump


@dataclass(frozen=True)
class OperatingPoint:
    """A pump resolved against the device: photon number, coupling, shifts.

    ``delta_eff_hz`` is the pump detuning from the statically shifted cavity
    frequency; ``fixed_point`` holds the semiclassical steady state
    (x, y, p, q) this operating point corresponds to.
    """

    n_pump: float
    coupling_hz: float
    static_shift_hz: float
    detuning_hz: float
    delta_eff_hz: float
    drive_amplitude: float
    branch_count: int = 1
    branch_index: int = 0
    fixed_point: tuple = (0.0, 0.0, 0.0, 0.0)


def resolve_operating_point(params: DeviceParams, pump: PumpDrive) -> OperatingPoint:
    """Solve the fixed-point cubic and package the occupied branch."""
    from . import stability  # deferred: stability imports these types

    points = stability.fixed_points(params, pump)
    idx = stability.occupied_branch_index(points, pump.sweep)
    fp = points[idx]
    n_pump = fp.n_photons
    g_hz = coupling_rate(params.single_photon_coupling_hz, n_pump)
    shift_hz = total_static_shift(
        n_pump,
        params.single_photon_coupling_hz,
        params.mech_freq_hz,
        params.cavity_kerr_hz,
    )
    return OperatingPoint(
        n_pump=n_pump,
        coupling_hz=g_hz,
        static_shift_hz=shift_hz,
        detuning_hz=pump.detuning_hz,
        delta_eff_hz=pump.detuning_hz + shift_hz,
        drive_amplitude=pump.drive_amplitude(params),
        branch_count=len(points),
        branch_index=idx,
        fixed_point=(fp.x, fp.y, fp.p, fp.q),
    )


def operating_point_for_coupling(
    params: DeviceParams, coupling_hz: float, delta_eff_hz: float
) -> OperatingPoint:
    """Back out the drive that realizes a target (g, effective detuning).

    The fixed point is constructed in closed form: p from g0 n_d, the drive
    amplitude from the Lorentzian at the effective detuning.  Useful to pin
    an operating point quoted via its coupling rather than via a power.
    """
    a = params.angular
    n_pump = photons_for_coupling(params.single_photon_coupling_hz, coupling_hz)
    shift_hz = total_static_shift(
        n_pump,
        params.single_photon_coupling_hz,
        params.mech_freq_hz,
        params.cavity_kerr_hz,
    )
    wm_eff = a.wm + a.gm**2 / (4.0 * a.wm)
    p_bar = a.g0 * n_pump / wm_eff
    q_bar = a.gm / (2.0 * a.wm) * p_bar
    b_slope = 2.0 * a.g0 + (a.ac / a.g0) * wm_eff
    detuning_hz = delta_eff_hz - shift_hz
    # exact effective detuning of the fixed point (differs from the quoted
    # static shift only at order (gm/wm)^2)
    a_eff = hz_to_angular(detuning_hz) + b_slope * p_bar
    e = math.sqrt(n_pump * (a_eff**2 + a.kappa**2 / 4.0))
    denom = a_eff**2 + a.kappa**2 / 4.0
    x_bar = 0.5 * a.kappa * e / denom
    y_bar = a_eff * e / denom
    return OperatingPoint(
        n_pump=n_pump,
        coupling_hz=coupling_hz,
        static_shift_hz=shift_hz,
        detuning_hz=detuning_hz,
        delta_eff_hz=delta_eff_hz,
        drive_amplitude=e,
        branch_count=1,
        branch_index=0,
        fixed_point=(x_bar, y_bar, p_bar, q_bar),
    )


@dataclass(frozen=True)
class DerivedQuantities:
    """Scalar quantities derived from a (device, pump) pair."""

    n_pump: float
    n_pump_linear: float
    coupling_hz: float
    optomech_kerr_per_photon_hz: float
    total_static_shift_hz: float
    static_displacement_zp: float
    dimensionless_power: float


def derive(params: DeviceParams, pump: PumpDrive) -> DerivedQuantities:
    op = resolve_operating_point(params, pump)
    n0 = resonant_photon_number(params, pump.injected_power_w(params))
    return DerivedQuantities(
        n_pump=op.n_pump,
        n_pump_linear=pump_photon_number_linear(params, pump),
        coupling_hz=op.coupling_hz,
        optomech_kerr_per_photon_hz=optomech_kerr_per_photon(
            params.single_photon_coupling_hz, params.mech_freq_hz
        ),
        total_static_shift_hz=op.static_shift_hz,
        static_displacement_zp=static_displacement(
            op.n_pump, params.single_photon_coupling_hz, params.mech_freq_hz
        ),
        dimensionless_power=dimensionless_power(
            params.single_photon_coupling_hz, n0, params.mech_freq_hz
        ),
    )
