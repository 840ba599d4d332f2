import math

import numpy as np
import pytest

from optolattice.physics import kernels
from optolattice.physics.dynamics import EquationsOfMotion, RampSchedule
from optolattice.physics.steadystate import solve_steady_state
from optolattice.physics.tmm import lattice_forces

WAVELENGTH = 780e-9
K = 2.0 * math.pi / WAVELENGTH
POSITIONS = np.array([0.41e-6, 0.79e-6, 1.18e-6])
ZETAS = np.array([0.03, 0.05, 0.02])


def test_field_forces_match_transfer_matrix_solve():
    forces = np.empty(3)
    scale_sq = kernels.field_forces(POSITIONS, ZETAS, 0.4, 0.8, 0.9, K, 2.5, 1e-7, forces)
    expected, scale = lattice_forces(POSITIONS, ZETAS, 0.4, 0.8, 0.9, K, 2.5, 1e-7)
    assert forces == pytest.approx(expected, rel=1e-10)
    assert scale_sq == pytest.approx(abs(scale) ** 2, rel=1e-12)


@pytest.mark.parametrize("time", [-1.0, 0.0, 0.003, 0.01, 0.5])
def test_ramp_fraction_matches_schedule(time):
    ramp = RampSchedule(duration=0.01, start_fraction=0.03)
    assert kernels.ramp_fraction(time, 0.01, 0.03) == pytest.approx(ramp.fraction(time))


def _equations(config):
    derived = config.derived()
    steady = solve_steady_state(config, derived)
    return EquationsOfMotion(config, derived, steady, RampSchedule()), derived, steady


def test_steady_state_is_an_equilibrium(desk_config):
    config = desk_config.with_overrides({"lattice.n_lat": 1e8})
    rhs, derived, steady = _equations(config)
    n = rhs.n
    at_rest = rhs(0.0, np.zeros(2 + 2 * n))
    assert at_rest[0] == 0.0
    assert np.all(at_rest[2:2 + n] == 0.0)

    kicked = np.zeros(2 + 2 * n)
    kicked[0] = 1e-3 * derived.x_thermal
    moved = rhs(0.0, kicked)
    assert abs(at_rest[1]) < 1e-4 * abs(moved[1])

    residual = rhs.inv_mass * np.asarray(steady.residual_forces) / rhs.anharmonicity
    shifted = np.zeros(2 + 2 * n)
    shifted[2] = 1e-3 * derived.x_thermal
    restoring = abs(rhs(0.0, shifted)[2 + n] - at_rest[2 + n])
    assert np.all(np.abs(at_rest[2 + n:] - residual) < 1e-6 * restoring)


def test_fixed_mirror_freezes_membrane(fixed_mirror_config):
    rhs, _, _ = _equations(fixed_mirror_config)
    y = np.zeros(4)
    y[0], y[2] = 1e-9, 5e-9
    out = rhs(0.0, y)
    assert out[0] == 0.0 and out[1] == 0.0
    assert out[3] < 0.0


def test_rk4_driver_matches_stepwise_reference(desk_config):
    config = desk_config.with_overrides({"lattice.n_lat": 1e8})
    rhs, derived, _ = _equations(config)
    n = rhs.n
    y0 = np.zeros(2 + 2 * n)
    y0[0] = 1e-3 * derived.x_thermal
    y0[2] = 2e-3 * derived.x_thermal
    dt = 2.0 * math.pi / (derived.omega_a * 200)
    steps = 200

    record = np.zeros((steps // 4 + 1, 2 + 2 * n))
    last = np.empty(2 + 2 * n)
    failed, hop = kernels.rk4_run(y0, dt, steps, 4, rhs.steady_positions, rhs.zetas,
                                  rhs.params, WAVELENGTH / 4.0, record, last)
    assert failed == 0 and hop == -1

    y = y0.copy()
    for step in range(steps):
        t = step * dt
        k1 = rhs(t, y)
        k2 = rhs(t + dt / 2, y + dt / 2 * k1)
        k3 = rhs(t + dt / 2, y + dt / 2 * k2)
        k4 = rhs(t + dt, y + dt * k3)
        y = y + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    assert last == pytest.approx(y, rel=1e-9, abs=1e-30)
    assert record[-1] == pytest.approx(y, rel=1e-9, abs=1e-30)
    assert np.all(record[0] == y0)


def test_rk4_driver_reports_first_hop(fixed_mirror_config):
    rhs, derived, _ = _equations(fixed_mirror_config)
    y0 = np.array([0.0, 0.0, 0.3 * WAVELENGTH, 0.0])
    record = np.zeros((11, 4))
    last = np.empty(4)
    dt = 2.0 * math.pi / (derived.omega_a * 200)
    failed, hop = kernels.rk4_run(y0, dt, 10, 1, rhs.steady_positions, rhs.zetas, rhs.params,
                                  WAVELENGTH / 4.0, record, last)
    assert failed == 0
    assert hop == 1
