"""
Equilibrium geometry of the lattice and the membrane.

The analytic lattice constant and the phase of the membrane reflection fix the
beam splitter positions; they are then checked (and if needed polished) against
the exact transfer-matrix forces.
"""

import logging
import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Optional, Sequence

import numpy as np
from scipy import optimize

from optolattice.error_handling import ConvergenceError, LatticeOverdrivenError
from optolattice.physics.params import CONSTANTS, DerivedParams
from optolattice.physics.tmm import lattice_forces, membrane_force, membrane_input_power

if TYPE_CHECKING:
    from optolattice.config_manager import SystemConfig

logger = logging.getLogger(__name__)

FORCE_TOLERANCE = 1e-9


def reflection_phase_shift(zeta: float, asymmetry: float) -> float:
    """χ⁺, the phase by which each sheet advances the standing wave."""
    if zeta * zeta * asymmetry * asymmetry > 4.0:
        raise LatticeOverdrivenError("lattice overdriven: ζ²A² > 4",
                                     {"zeta": zeta, "asymmetry": asymmetry})
    argument = zeta * (math.sqrt(4.0 + asymmetry ** 2)
                       + math.sqrt(4.0 - zeta ** 2 * asymmetry ** 2)) / (2.0 * (1.0 + zeta ** 2))
    if argument > 1.0:
        raise LatticeOverdrivenError("lattice overdriven: no real reflection phase",
                                     {"zeta": zeta, "asymmetry": asymmetry,
                                      "argument": argument})
    return math.asin(argument)


def lattice_constant(zeta: float, asymmetry: float, wavelength: float) -> float:
    """Reduced lattice constant d = (λ/2)(1 − χ⁺/π)."""
    return 0.5 * wavelength * (1.0 - reflection_phase_shift(zeta, asymmetry) / math.pi)


def reflectivity_from_asymmetry(asymmetry: float) -> float:
    """Invert A = (1 − R²)/R for R ∈ (0, 1]."""
    return 0.5 * (math.sqrt(asymmetry ** 2 + 4.0) - asymmetry)


def steady_input_power(c0: complex, eta: float, t: float, sigma_l: float) -> float:
    """Power entering the cavity when the lattice beam has amplitude ``c0`` at the atoms."""
    return membrane_input_power(c0 * t, eta, sigma_l)


def membrane_steady(input_power: float, coupling: float, omega_c: float, kappa: float,
                    membrane_mass: float, omega_m: float) -> float:
    """Static membrane displacement x_m^st = F_m,0/(MΩ_m²)."""
    return 4.0 * coupling / (omega_c * kappa) * input_power / (membrane_mass * omega_m ** 2)


def _normalized_forces(positions: Sequence[float], zeta: float, reflectivity: float,
                       phase: float, wavenumber: float) -> np.ndarray:
    # Unit amplitude and area: forces in units of ε₀σ_L|C0|² = 2P/c.
    zetas = [zeta] * len(positions)
    forces, _ = lattice_forces(positions, zetas, phase, reflectivity, 1.0, wavenumber, 1.0, 1.0)
    return np.asarray(forces) / CONSTANTS.vacuum_permittivity


def steady_positions(n_bs: int, zeta: float, asymmetry: float, phase: float, wavelength: float,
                     tolerance: float = FORCE_TOLERANCE, max_iterations: int = 100) -> np.ndarray:
    """Force-free positions of ``n_bs`` beam splitters for membrane phase ``phase``.

    The first sheet sits in the second well from the reference plane; the others
    follow at the reduced lattice constant.

    Raises:
        LatticeOverdrivenError: When no real lattice constant exists.
        ConvergenceError: When the force residual cannot be brought below tolerance.
    """
    wavenumber = 2.0 * math.pi / wavelength
    chi = reflection_phase_shift(zeta, asymmetry)
    spacing = lattice_constant(zeta, asymmetry, wavelength)
    first = (-(phase + chi) / (2.0 * wavenumber)) % (0.5 * wavelength) + 0.5 * wavelength
    guess = first + spacing * np.arange(n_bs)

    reflectivity = reflectivity_from_asymmetry(asymmetry)
    residual = _normalized_forces(guess, zeta, reflectivity, phase, wavenumber)
    if np.max(np.abs(residual)) < tolerance:
        return guess

    logger.debug(f"Polishing steady positions, initial residual {np.max(np.abs(residual)):.3e}")
    solution = optimize.root(
        lambda u: _normalized_forces(guess + u / wavenumber, zeta, reflectivity, phase, wavenumber),
        np.zeros(n_bs),
        method="hybr",
        options={"xtol": 1e-14, "maxfev": max_iterations * (n_bs + 1)},
    )
    positions = guess + solution.x / wavenumber
    residual = _normalized_forces(positions, zeta, reflectivity, phase, wavenumber)
    worst = float(np.max(np.abs(residual)))
    if worst >= tolerance:
        raise ConvergenceError(
            f"steady-state refinement did not converge: {solution.message}",
            residual=worst,
            context={"n_bs": n_bs, "zeta": zeta},
        )
    return positions


def restoring_stiffness(positions: Sequence[float], zeta: float, reflectivity: float,
                        phase: float, wavenumber: float,
                        step: Optional[float] = None) -> np.ndarray:
    """Numerical −∂F_i/∂z_i for each sheet, in units of ε₀σ_L|C0|² per metre.

    Positive entries mean a restoring force.
    """
    z = np.asarray(positions, dtype=float)
    step = step if step is not None else 1e-6 * 2.0 * math.pi / wavenumber
    stiffness = np.empty(z.size)
    for i in range(z.size):
        up = z.copy()
        down = z.copy()
        up[i] += step
        down[i] -= step
        f_up = _normalized_forces(up, zeta, reflectivity, phase, wavenumber)[i]
        f_down = _normalized_forces(down, zeta, reflectivity, phase, wavenumber)[i]
        stiffness[i] = -(f_up - f_down) / (2.0 * step)
    return stiffness


@dataclass(frozen=True)
class SteadyState:
    """Equilibrium of one configuration at a given lattice power.

    ``input_power`` enters the cavity through a transparent lattice and sets the
    membrane displacement; ``lattice_input_power`` is the cavity input with the
    sheets at their steady planes, and ``lattice_membrane_force`` the radiation force
    it exerts.
    """
    membrane_displacement: float
    phase: float
    positions: np.ndarray
    lattice_constant: float
    input_power: float
    residual_forces: np.ndarray
    stiffness: np.ndarray
    lattice_input_power: float = 0.0
    lattice_membrane_force: float = 0.0
    power_fraction: float = 1.0


def solve_steady_state(config: "SystemConfig", derived: Optional[DerivedParams] = None,
                       power_fraction: float = 1.0) -> SteadyState:
    """Membrane displacement, phase and lattice positions at ``power_fraction``·P0."""
    if derived is None:
        derived = config.derived()
    lattice = config.lattice
    membrane = config.membrane

    c0 = derived.c0 * math.sqrt(power_fraction)
    input_power = steady_input_power(c0, membrane.eta, lattice.t, derived.sigma_l)
    x_st = membrane_steady(input_power, derived.optomechanical_coupling, derived.omega_c,
                           derived.kappa, membrane.mass_kg, derived.omega_m)
    phase = 4.0 * derived.optomechanical_coupling * x_st / derived.kappa

    positions = steady_positions(lattice.n_bs, derived.zeta, derived.asymmetry, phase,
                                 lattice.wavelength_m)
    zetas = [derived.zeta] * lattice.n_bs
    forces, c_m = lattice_forces(positions, zetas, phase, membrane.eta, lattice.t,
                               derived.wavenumber, c0, derived.sigma_l)
    stiffness = restoring_stiffness(positions, derived.zeta, derived.reflectivity, phase,
                                    derived.wavenumber)
    logger.debug(f"Steady state: x_m = {x_st:.4e} m, Φ = {phase:.4e} rad, "
                 f"d = {lattice_constant(derived.zeta, derived.asymmetry, lattice.wavelength_m):.6e} m")
    return SteadyState(
        membrane_displacement=x_st,
        phase=phase,
        positions=positions,
        lattice_constant=lattice_constant(derived.zeta, derived.asymmetry, lattice.wavelength_m),
        input_power=input_power,
        lattice_input_power=membrane_input_power(c_m, membrane.eta, derived.sigma_l),
        lattice_membrane_force=membrane_force(c_m, membrane.eta, derived.optomechanical_coupling,
                                              derived.omega_c, derived.kappa, derived.sigma_l),
        residual_forces=np.asarray(forces),
        stiffness=stiffness,
        power_fraction=power_fraction,
    )
