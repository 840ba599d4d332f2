import math

import numpy as np
import pytest

from optolattice.config_manager import SystemConfig
from optolattice.error_handling import ConfigError
from optolattice.physics.params import (
    CONSTANTS,
    coupling_rates,
    derive,
    derive_nu,
    derive_optics,
    derive_zeta,
    effective_cavity_factor,
    gamma_opt_from_cooling,
    lattice_intensities,
    launch_power_for_trap_frequency,
    omega_a_from_fields,
    resonant_atom_number,
    thermal_amplitude,
    zeta_from_polarizability,
)

TWO_PI = 2.0 * math.pi


def test_optics_from_transmission():
    reflectivity, asymmetry, cavity_factor = derive_optics(1.0, 0.71, 0.41, 570.0)
    assert reflectivity == pytest.approx(0.5041, rel=1e-12)
    assert asymmetry == pytest.approx((1.0 - 0.5041 ** 2) / 0.5041, rel=1e-12)
    assert cavity_factor == pytest.approx(2.0 * 0.41 * 2.0 * 570.0 / math.pi, rel=1e-12)


def test_optics_rejects_invalid_transmission():
    with pytest.raises(ConfigError):
        derive_optics(1.0, 0.0, 0.41, 570.0)
    with pytest.raises(ConfigError):
        derive_optics(1.2, 0.7, 0.41, 570.0)


@pytest.mark.parametrize("atoms", [1.0, 1.65e5, 4.4e6])
def test_zeta_routes_agree(atoms):
    args = (atoms, TWO_PI * -960e6, TWO_PI * 6.066e6, 780e-9, math.pi * (280e-6) ** 2 / 2)
    assert zeta_from_polarizability(*args) == pytest.approx(derive_zeta(*args), rel=1e-12)


def test_zeta_routes_agree_over_random_draws():
    rng = np.random.default_rng(2024)
    for _ in range(100):
        args = (
            10.0 ** rng.uniform(0.0, 8.0),
            -TWO_PI * 10.0 ** rng.uniform(6.0, 10.0),
            TWO_PI * rng.uniform(1e6, 4e7),
            rng.uniform(400e-9, 1100e-9),
            math.pi * rng.uniform(50e-6, 500e-6) ** 2 / 2,
        )
        assert zeta_from_polarizability(*args) == pytest.approx(derive_zeta(*args), rel=1e-12)


def test_zeta_scales_with_atoms_and_detuning():
    base = derive_zeta(1e5, -1e9, 1e7, 780e-9, 1e-7)
    assert derive_zeta(2e5, -1e9, 1e7, 780e-9, 1e-7) == pytest.approx(2 * base)
    assert derive_zeta(1e5, -2e9, 1e7, 780e-9, 1e-7) == pytest.approx(base / 2)
    assert derive_zeta(0.0, -1e9, 1e7, 780e-9, 1e-7) == 0.0


@pytest.mark.parametrize("delta", [0.0, 1e9])
def test_zeta_requires_red_detuning(delta):
    with pytest.raises(ConfigError):
        derive_zeta(1e5, delta, 1e7, 780e-9, 1e-7)


def test_nu():
    assert derive_nu(0.0, 1.5) == 0.0
    assert derive_nu(0.2, 2.0) == pytest.approx(0.02)


def test_resonant_atom_number():
    omega_m = TWO_PI * 276e3
    n = resonant_atom_number(1e8, 233.0, omega_m, trapped_fraction=0.11)
    assert n == pytest.approx(0.11 * math.pi * 233.0 / (2 * omega_m) * 1e8)
    assert resonant_atom_number(1e8, 233.0, omega_m, mode="all-atoms") == 1e8
    with pytest.raises(ConfigError):
        resonant_atom_number(1e8, 233.0, 0.0)
    with pytest.raises(ConfigError):
        resonant_atom_number(1e8, 233.0, omega_m, mode="some")


def test_coupling_rates():
    omega = TWO_PI * 276e3
    g_n, gamma_sym = coupling_rates(1e4, 1.4e-25, 117e-12, omega, omega, 0.41, 570.0, 1.0, 0.71,
                                    233.0)
    factor = 2 * 0.41 * 2 * 570.0 / math.pi
    expected = 0.5 * factor * omega * math.sqrt(1e4 * 1.4e-25 / 117e-12)
    assert g_n == pytest.approx(expected, rel=1e-12)
    assert gamma_sym == pytest.approx(4 * 0.71 ** 2 * expected ** 2 / 233.0, rel=1e-12)
    with pytest.raises(ConfigError):
        coupling_rates(1e4, 1.4e-25, 117e-12, omega, omega, 0.41, 570.0, 1.0, 0.71, 0.0)


def test_trap_frequency_and_launch_power_are_inverse():
    k = TWO_PI / 780e-9
    sigma = 1.2e-7
    zeta_atom = derive_zeta(1.0, TWO_PI * -960e6, TWO_PI * 6.066e6, 780e-9, sigma)
    reflectivity, t, mass = 0.5041, 0.71, 1.443e-25
    omega_a = TWO_PI * 276e3
    power = launch_power_for_trap_frequency(omega_a, zeta_atom, mass, k, reflectivity, t)
    intensity_in = power * t * t / sigma
    back = reflectivity ** 2 * intensity_in
    recovered = omega_a_from_fields(zeta_atom, 1.0, mass, k, sigma, intensity_in, back)
    assert recovered == pytest.approx(omega_a, rel=1e-12)


def test_gamma_opt_from_cooling():
    assert gamma_opt_from_cooling(1.0, 12.04, 0.96) == pytest.approx(0.96 * 11.04)
    with pytest.raises(ConfigError):
        gamma_opt_from_cooling(2.0, 1.0, 0.96)


def test_thermal_amplitude():
    value = thermal_amplitude(117e-12, TWO_PI * 276e3, 300.0)
    assert value ** 2 == pytest.approx(CONSTANTS.boltzmann * 300.0
                                       / (117e-12 * (TWO_PI * 276e3) ** 2))


def test_derive_defaults():
    config = SystemConfig()
    derived = derive(config)
    assert derived.reflectivity == pytest.approx(0.5041)
    assert derived.n_optical == pytest.approx(0.33 * 3e6)
    assert derived.atoms_per_bs == pytest.approx(0.33 * 3e6 / 2)
    assert derived.omega_a == pytest.approx(config.membrane.omega_m)
    assert derived.gamma_baseline == pytest.approx(11.56)
    assert derived.nu == pytest.approx(derived.asymmetry ** 2 * derived.zeta ** 2 / 8)
    assert derived.effective_cavity_factor == pytest.approx(
        effective_cavity_factor(derived.optomechanical_coupling, derived.wavenumber,
                                derived.kappa))
    assert derived.intensity_back == pytest.approx(derived.reflectivity ** 2
                                                   * derived.intensity_in)
    assert derived.gamma_sym > 0.0
    assert derived.coupling_fraction == pytest.approx(
        derived.n_resonant / derived.n_optical * derived.stiffness_scale)


def test_derive_empty_lattice():
    derived = derive(SystemConfig().with_overrides({"lattice.n_lat": 0.0}))
    assert derived.zeta == 0.0
    assert derived.n_resonant == 0.0
    assert derived.gamma_sym == 0.0
    assert derived.coupling_fraction == 0.0


def test_derive_without_atomic_damping():
    derived = derive(SystemConfig().with_overrides({"lattice.gamma_a_per_s": 0.0}))
    assert derived.n_resonant == 0.0
    assert derived.gamma_sym == 0.0
    derived = derive(SystemConfig().with_overrides({"lattice.gamma_a_per_s": 0.0,
                                                    "lattice.atom_number_mode": "all-atoms"}))
    assert math.isinf(derived.gamma_sym)


def test_all_atoms_mode_uses_field_trap_frequency():
    derived = derive(SystemConfig().with_overrides({"lattice.atom_number_mode": "all-atoms"}))
    assert derived.omega_a == pytest.approx(derived.omega_a_fields)
    assert derived.stiffness_scale == pytest.approx(1.0)
    assert derived.n_resonant == 3e6


def test_lattice_intensities():
    intensity_in, intensity_back = lattice_intensities(3.4e-3, 0.71, 0.5041, 1.2e-7)
    assert intensity_in == pytest.approx(3.4e-3 * 0.71 ** 2 / 1.2e-7)
    assert intensity_back == pytest.approx(0.5041 ** 2 * intensity_in)


def test_placed_cavity_factor_matches_coupling():
    derived = derive(SystemConfig())
    assert derived.placed_cavity_factor == pytest.approx(0.63 * derived.cavity_factor)
    assert derived.effective_cavity_factor == pytest.approx(derived.placed_cavity_factor,
                                                            rel=0.03)


def test_grating_fraction_sets_zeta_only():
    base = derive(SystemConfig())
    denser = derive(SystemConfig().with_overrides({"lattice.grating_fraction": 0.66}))
    assert denser.zeta == pytest.approx(2.0 * base.zeta)
    assert denser.n_resonant == base.n_resonant
    assert denser.coupling_fraction == pytest.approx(0.5 * base.coupling_fraction)
