import math

import numpy as np
import pytest

from optolattice.config_manager import SystemConfig
from optolattice.error_handling import LatticeOverdrivenError
from optolattice.physics.params import CONSTANTS
from optolattice.physics.tmm import membrane_force
from optolattice.physics.steadystate import (
    FORCE_TOLERANCE,
    _normalized_forces,
    lattice_constant,
    membrane_steady,
    reflection_phase_shift,
    reflectivity_from_asymmetry,
    restoring_stiffness,
    solve_steady_state,
    steady_positions,
)

WAVELENGTH = 780e-9
K = 2.0 * math.pi / WAVELENGTH


def _asymmetry(reflectivity):
    return (1.0 - reflectivity ** 2) / reflectivity


def test_lattice_constant_without_atoms_is_half_wavelength():
    assert lattice_constant(0.0, 1.48, WAVELENGTH) == WAVELENGTH / 2


def test_lattice_constant_shrinks_with_polarizability():
    spacings = [lattice_constant(z, 1.0, WAVELENGTH) for z in (0.0, 0.01, 0.05, 0.2)]
    assert all(a > b for a, b in zip(spacings, spacings[1:]))


def test_symmetric_phase_shift_is_twice_arctan():
    for zeta in (0.01, 0.1, 0.5):
        assert reflection_phase_shift(zeta, 0.0) == pytest.approx(2 * math.atan(zeta), rel=1e-12)


def test_overdriven_lattice():
    with pytest.raises(LatticeOverdrivenError):
        reflection_phase_shift(3.0, 1.0)


@pytest.mark.parametrize("reflectivity", [0.06, 0.5041, 1.0])
def test_reflectivity_from_asymmetry(reflectivity):
    assert reflectivity_from_asymmetry(_asymmetry(reflectivity)) == pytest.approx(reflectivity)


@pytest.mark.parametrize("n_bs", [1, 2, 4])
@pytest.mark.parametrize("zeta,reflectivity,phase", [
    (1e-3, 0.5041, 0.0),
    (0.02, 0.5041, 0.3),
    (0.05, 0.2, -1.0),
])
def test_steady_positions_are_force_free(n_bs, zeta, reflectivity, phase):
    positions = steady_positions(n_bs, zeta, _asymmetry(reflectivity), phase, WAVELENGTH)
    assert len(positions) == n_bs
    assert np.all(np.diff(positions) > 0)
    assert WAVELENGTH / 2 <= positions[0] < WAVELENGTH
    residual = _normalized_forces(positions, zeta, reflectivity, phase, K)
    assert np.max(np.abs(residual)) < FORCE_TOLERANCE


def test_single_sheet_in_standing_wave_is_trapped():
    zeta = 0.05
    positions = steady_positions(1, zeta, 0.0, 0.0, WAVELENGTH)
    assert K * positions[0] == pytest.approx(2 * math.pi - math.atan(zeta), rel=1e-12)
    stiffness = restoring_stiffness(positions, zeta, 1.0, 0.0, K)
    assert stiffness[0] > 0.0


def test_solve_steady_state_defaults():
    config = SystemConfig()
    derived = config.derived()
    state = solve_steady_state(config, derived)
    assert len(state.positions) == config.lattice.n_bs
    assert state.membrane_displacement > 0.0
    assert state.phase == pytest.approx(4 * derived.optomechanical_coupling
                                        * state.membrane_displacement / derived.kappa)
    scale = CONSTANTS.vacuum_permittivity * derived.sigma_l * derived.c0 ** 2
    assert np.max(np.abs(state.residual_forces)) <= 1e-8 * scale
    assert state.lattice_constant == pytest.approx(
        lattice_constant(derived.zeta, derived.asymmetry, config.lattice.wavelength_m))


def test_steady_state_scales_with_power():
    config = SystemConfig()
    full = solve_steady_state(config)
    half = solve_steady_state(config, power_fraction=0.5)
    assert half.input_power == pytest.approx(0.5 * full.input_power, rel=1e-12)
    assert half.membrane_displacement == pytest.approx(0.5 * full.membrane_displacement,
                                                       rel=1e-12)


def test_membrane_steady_balances_radiation_force():
    config = SystemConfig()
    derived = config.derived()
    state = solve_steady_state(config, derived)
    x_st = membrane_steady(state.input_power, derived.optomechanical_coupling, derived.omega_c,
                           derived.kappa, config.membrane.mass_kg, derived.omega_m)
    assert x_st == pytest.approx(state.membrane_displacement, rel=1e-12)
    restoring = x_st * config.membrane.mass_kg * derived.omega_m ** 2
    transparent = membrane_force(derived.c0 * config.lattice.t, config.membrane.eta,
                                 derived.optomechanical_coupling, derived.omega_c, derived.kappa,
                                 derived.sigma_l)
    assert transparent == pytest.approx(restoring, rel=1e-12)


def test_lattice_membrane_force_matches_lattice_input_power():
    config = SystemConfig()
    derived = config.derived()
    state = solve_steady_state(config, derived)
    assert state.lattice_membrane_force == pytest.approx(
        4 * derived.optomechanical_coupling / (derived.omega_c * derived.kappa)
        * state.lattice_input_power, rel=1e-12)
    assert state.lattice_input_power > 0.0
