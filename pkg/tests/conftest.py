import numpy as np
import pytest

from omcavity import model, dynamics


@pytest.fixture(scope="session")
def paper():
    return model.paper_device(cavity_kerr_hz=0.005)


@pytest.fixture(scope="session")
def paper_nokerr():
    return model.paper_device(cavity_kerr_hz=0.0)


@pytest.fixture(scope="session", autouse=True)
def warm_jit(paper):
    """Compile the integrator kernels once so timings stay honest."""
    pump = model.PumpDrive.from_dbm(-paper.mech_freq_hz, -40.0)
    dynamics.integrate(paper, pump, np.zeros(4), 1e-6, sample_dt=5e-8)
    dynamics.lyapunov_max(paper, pump, t_span=2e-5, t_transient=0.0, seed=0,
                          state0=np.zeros(4))


def random_device(rng):
    """A physically sensible random device for property sweeps."""
    return model.DeviceParams(
        cavity_freq_hz=10 ** rng.uniform(9.3, 9.9),
        mech_freq_hz=10 ** rng.uniform(5.8, 7.2),
        input_rate_hz=10 ** rng.uniform(4.0, 5.5),
        output_rate_hz=10 ** rng.uniform(4.0, 5.5),
        internal_rate_hz=10 ** rng.uniform(4.0, 5.5),
        mech_damping_hz=10 ** rng.uniform(0.5, 3.0),
        single_photon_coupling_hz=10 ** rng.uniform(1.5, 3.0),
        cavity_kerr_hz=float(rng.choice([0.0, 10 ** rng.uniform(-3.0, -1.5)])),
    )


def random_pump(rng, device, dbm_range=(-55.0, -25.0)):
    detuning = rng.uniform(-2.0, 0.5) * device.mech_freq_hz
    return model.PumpDrive.from_dbm(detuning, rng.uniform(*dbm_range))
