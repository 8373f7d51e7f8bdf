"""Semiclassical simulator for a strongly pumped microwave optomechanical
cavity: pump-dressed transmission, fixed-point stability maps, nonlinear
time evolution with response classification, and pulsed-pump transients."""

from .model import (
    DeviceParams,
    PumpDrive,
    OperatingPoint,
    DerivedQuantities,
    paper_device,
    total_linewidth,
    optomech_kerr_per_photon,
    coupling_rate,
    photons_for_coupling,
    static_displacement,
    total_static_shift,
    dimensionless_power,
    resonant_photon_number,
    pump_photon_number,
    pump_photon_number_linear,
    resolve_operating_point,
    operating_point_for_coupling,
    derive,
    dbm_to_watt,
    watt_to_dbm,
)
from .linresp import (
    TransmissionTrace,
    coupling_matrix,
    transmission,
    spectrum,
    pump_sweep_map,
    peak_splitting,
    polariton_gap_hz,
    coupling_for_splitting,
)
from .stability import (
    FixedPoint,
    StabilityVerdict,
    GridSpec,
    PhaseMap,
    eom_coefficients,
    fixed_points,
    jacobian,
    verdict,
    classify_point,
    classify_column,
    scan_phase_map,
    boundary_curve,
)
from .dynamics import (
    Trajectory,
    Psd,
    ResponseClass,
    ClassifierThresholds,
    PulseSegment,
    ProbeDrive,
    eom_rhs,
    integrate,
    output_psd,
    classify_response,
    lyapunov_max,
    classify_cell,
)
from .transient import (
    TransientResponse,
    build_m,
    eigen_gap_hz,
    transient_linear_response,
    fringe_frequency_hz,
    envelope_decay_rate,
)

__version__ = "0.1.0"
