import math

import pytest

from optolattice.config_manager import SystemConfig
from optolattice.physics.params import zero_point_fluctuation

LAB_OMEGA_M_HZ = 276e3
DESK_OMEGA_M_HZ = 1e3


def desk_overrides(omega_m_hz: float = DESK_OMEGA_M_HZ) -> dict:
    """Membrane slowed to ``omega_m_hz`` with the optomechanical coupling G held fixed."""
    base = SystemConfig().membrane
    x_zpf_lab = zero_point_fluctuation(base.mass_kg, 2.0 * math.pi * LAB_OMEGA_M_HZ)
    x_zpf_desk = zero_point_fluctuation(base.mass_kg, 2.0 * math.pi * omega_m_hz)
    return {
        "membrane.omega_m_hz": omega_m_hz,
        "membrane.g0_per_s": base.g0_per_s * x_zpf_desk / x_zpf_lab,
        "simulation.steps_per_period": 50,
        "simulation.record_every": 10,
    }


@pytest.fixture()
def desk_config() -> SystemConfig:
    return SystemConfig().with_overrides(desk_overrides())


@pytest.fixture()
def baseline_config(desk_config) -> SystemConfig:
    """Empty lattice without the power ramp: a free damped membrane."""
    return desk_config.with_overrides({
        "lattice.n_lat": 0.0,
        "simulation.ramp_enabled": False,
    })


@pytest.fixture()
def fixed_mirror_config(desk_config) -> SystemConfig:
    """One undamped sheet in front of a fixed mirror."""
    return desk_config.with_overrides({
        "lattice.n_bs": 1,
        "lattice.gamma_a_per_s": 0.0,
        "simulation.fixed_mirror": True,
        "simulation.ramp_enabled": False,
        "simulation.steps_per_period": 200,
        "simulation.record_every": 20,
        "simulation.initial_displacement_m": 5e-9,
        "simulation.anharmonicity": 1.0,
    })


@pytest.fixture()
def lab_config() -> SystemConfig:
    """Full-scale membrane on a coarse integration grid."""
    return SystemConfig().with_overrides({
        "simulation.steps_per_period": 100,
        "simulation.record_every": 10,
    })
