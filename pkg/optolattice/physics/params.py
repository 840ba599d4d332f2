"""
Physical constants and derived parameters of the atom-membrane lattice.

Every dimensionless or composite quantity used by the solvers is derived here from
a validated ``SystemConfig``. All functions are pure.
"""

import logging
import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Optional, Tuple

from optolattice.error_handling import ConfigError

if TYPE_CHECKING:
    from optolattice.config_manager import SystemConfig

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PhysicalConstants:
    """CODATA 2018 values in SI units."""
    speed_of_light: float = 299_792_458.0
    vacuum_permittivity: float = 8.8541878128e-12
    boltzmann: float = 1.380649e-23
    reduced_planck: float = 1.054571817e-34


CONSTANTS = PhysicalConstants()


@dataclass(frozen=True)
class DerivedParams:
    """Composite parameters of one configuration.

    ``zeta`` is the polarizability density of a single beam splitter formed by the
    atoms of the density grating. ``n_resonant`` is the number of atoms that couple
    dynamically to the membrane. ``stiffness_scale`` maps the field-derived trap
    frequency onto the dynamical one, and ``coupling_fraction`` is the ratio by
    which the membrane sees the lattice polarizability.

    ``cavity_factor`` is the bare enhancement 2|r_m|(2F/π). ``placed_cavity_factor``
    applies the membrane placement to it and matches ``effective_cavity_factor``,
    which follows from the quoted g0.
    """
    zeta: float
    reflectivity: float
    asymmetry: float
    nu: float
    cavity_factor: float
    placed_cavity_factor: float
    g_n: float
    gamma_sym: float
    n_resonant: float

    wavenumber: float
    sigma_l: float
    omega_m: float
    kappa: float
    omega_c: float
    gamma_m_prime: float
    x_zpf: float
    optomechanical_coupling: float
    effective_cavity_factor: float
    g_n_effective: float
    gamma_sym_effective: float
    n_optical: float
    atoms_per_bs: float
    omega_a: float
    omega_a_fields: float
    stiffness_scale: float
    coupling_fraction: float
    intensity_in: float
    intensity_back: float
    c0: float
    x_thermal: float

    @property
    def gamma_baseline(self) -> float:
        return self.gamma_m_prime


def derive_optics(eta: float, t: float, r_m: float, finesse: float) -> Tuple[float, float, float]:
    """Lattice reflectivity R, asymmetry A and cavity enhancement factor f."""
    if not 0.0 < eta <= 1.0 or not 0.0 < t <= 1.0:
        raise ConfigError(
            f"lattice reflectivity needs 0 < η ≤ 1 and 0 < t ≤ 1 (got η={eta}, t={t})",
            {"eta": eta, "t": t},
        )
    reflectivity = eta * t * t
    asymmetry = (1.0 - reflectivity ** 2) / reflectivity
    cavity_factor = 2.0 * abs(r_m) * (2.0 * finesse / math.pi)
    return reflectivity, asymmetry, cavity_factor


def _check_detuning(delta_la: float, sigma_l: float) -> None:
    if delta_la == 0.0:
        raise ConfigError("laser-atom detuning of zero is on resonance", {"delta_la": delta_la})
    if delta_la > 0.0:
        raise ConfigError("lattice must be red detuned (Δ_LA < 0)", {"delta_la": delta_la})
    if sigma_l <= 0.0:
        raise ConfigError("mode area σ_L must be positive", {"sigma_l": sigma_l})


def derive_zeta(n_bs_atoms: float, delta_la: float, gamma: float, wavelength: float,
                sigma_l: float) -> float:
    """Polarizability density ζ = (Γ/−Δ_LA)·N_BS λ²/(4πσ_L) of one beam splitter."""
    _check_detuning(delta_la, sigma_l)
    return (gamma / -delta_la) * n_bs_atoms * wavelength ** 2 / (4.0 * math.pi * sigma_l)


def zeta_from_polarizability(n_bs_atoms: float, delta_la: float, gamma: float,
                             wavelength: float, sigma_l: float) -> float:
    """ζ = kηα/2ε₀ from the far-detuned atomic polarizability of a thin sheet."""
    _check_detuning(delta_la, sigma_l)
    eps0 = CONSTANTS.vacuum_permittivity
    polarizability = (gamma / -delta_la) * eps0 * wavelength ** 3 / (4.0 * math.pi ** 2)
    density = n_bs_atoms / sigma_l
    return (2.0 * math.pi / wavelength) * density * polarizability / (2.0 * eps0)


def derive_nu(zeta: float, asymmetry: float) -> float:
    return asymmetry ** 2 * zeta ** 2 / 8.0


def resonant_atom_number(n_lat: float, gamma_a: float, omega_m: float,
                         trapped_fraction: float = 1.0, mode: str = "resonant") -> float:
    """Atoms dynamically coupled to the membrane.

    In ``resonant`` mode only the atoms inside the motional linewidth around Ω_m
    count, N = α·(πΓ_a/2Ω_m)·N_lat. In ``all-atoms`` mode N = N_lat.
    """
    if omega_m <= 0.0:
        raise ConfigError("membrane frequency must be positive", {"omega_m": omega_m})
    if mode == "all-atoms":
        return n_lat
    if mode != "resonant":
        raise ConfigError(f"unknown atom number mode {mode!r}")
    return trapped_fraction * (math.pi * gamma_a / (2.0 * omega_m)) * n_lat


def _g_n(n_atoms: float, atom_mass: float, membrane_mass: float, omega_a: float,
         omega_m: float, cavity_factor: float) -> float:
    return 0.5 * cavity_factor * omega_a * math.sqrt(
        n_atoms * atom_mass * omega_a / (membrane_mass * omega_m)
    )


def coupling_rates(n_atoms: float, atom_mass: float, membrane_mass: float, omega_a: float,
                   omega_m: float, r_m: float, finesse: float, eta: float, t: float,
                   gamma_a: float, cavity_factor: Optional[float] = None) -> Tuple[float, float]:
    """Linear atom-membrane coupling g_N and the sympathetic cooling rate Γ_sym.

    ``cavity_factor`` replaces the bare enhancement 2|r_m|(2F/π) when given.
    """
    if gamma_a <= 0.0:
        raise ConfigError("Γ_sym is undefined for Γ_a ≤ 0", {"gamma_a": gamma_a})
    if cavity_factor is None:
        cavity_factor = 2.0 * abs(r_m) * (2.0 * finesse / math.pi)
    g_n = _g_n(n_atoms, atom_mass, membrane_mass, omega_a, omega_m, cavity_factor)
    gamma_sym = 4.0 * eta ** 2 * t ** 2 * g_n ** 2 / gamma_a
    return g_n, gamma_sym


def omega_a_from_fields(zeta: float, n_atoms: float, atom_mass: float, wavenumber: float,
                        sigma_l: float, intensity_in: float, intensity_back: float) -> float:
    """Trap frequency of a beam splitter, from NmΩ_a² = 8kσ_Lζ√(I0·I1)/c."""
    if n_atoms <= 0.0:
        raise ConfigError("trap frequency is undefined without atoms", {"n_atoms": n_atoms})
    c = CONSTANTS.speed_of_light
    stiffness = 8.0 * wavenumber * sigma_l * zeta * math.sqrt(intensity_in * intensity_back) / c
    return math.sqrt(stiffness / (n_atoms * atom_mass))


def launch_power_for_trap_frequency(omega_a: float, zeta_single_atom: float, atom_mass: float,
                                    wavenumber: float, reflectivity: float, t: float) -> float:
    """Launched lattice power P0 that gives the trap frequency ``omega_a``."""
    if zeta_single_atom <= 0.0 or reflectivity <= 0.0:
        raise ConfigError("no lattice stiffness for ζ = 0 or R = 0")
    c = CONSTANTS.speed_of_light
    return omega_a ** 2 * c * atom_mass / (8.0 * wavenumber * zeta_single_atom * reflectivity * t * t)


def gamma_opt_from_cooling(mean_sq_displacement: float, thermal_mean_sq: float,
                           gamma_m: float, tolerance: float = 1e-9) -> float:
    """Optomechanical damping inferred from a cooled mean-square displacement."""
    if mean_sq_displacement <= 0.0:
        raise ConfigError("mean-square displacement must be positive")
    if mean_sq_displacement > thermal_mean_sq * (1.0 + tolerance):
        raise ConfigError("cooled displacement exceeds the thermal value",
                          {"measured": mean_sq_displacement, "thermal": thermal_mean_sq})
    return gamma_m * (thermal_mean_sq / mean_sq_displacement - 1.0)


def zero_point_fluctuation(membrane_mass: float, omega_m: float) -> float:
    return math.sqrt(CONSTANTS.reduced_planck / (2.0 * membrane_mass * omega_m))


def optomechanical_coupling(g0: float, x_zpf: float) -> float:
    """Frequency pull G = g0/x_zpf of the cavity per unit membrane displacement.

    g0 is quoted at the membrane's operating point, so the placement is already in it.
    """
    return g0 / x_zpf


def effective_cavity_factor(coupling: float, wavenumber: float, kappa: float) -> float:
    """f_G = 2G/(kκ): the membrane displacement amplification seen by the lattice phase."""
    return 2.0 * coupling / (wavenumber * kappa)


def thermal_amplitude(membrane_mass: float, omega_m: float, temperature: float) -> float:
    return math.sqrt(CONSTANTS.boltzmann * temperature / (membrane_mass * omega_m ** 2))


def lattice_intensities(power: float, t: float, reflectivity: float,
                        sigma_l: float) -> Tuple[float, float]:
    """Intensities of the incoming (I0) and returning (I1) lattice beams at the atoms."""
    intensity_in = power * t * t / sigma_l
    return intensity_in, reflectivity ** 2 * intensity_in


def field_amplitude(intensity: float) -> float:
    """|C| of a travelling wave with intensity I = ε₀c|C|²/2."""
    return math.sqrt(2.0 * intensity / (CONSTANTS.vacuum_permittivity * CONSTANTS.speed_of_light))


def derive(config: "SystemConfig") -> DerivedParams:
    """Derive all composite parameters of ``config``."""
    membrane = config.membrane
    lattice = config.lattice

    k = lattice.wavenumber
    sigma_l = lattice.sigma_l
    omega_m = membrane.omega_m
    if membrane.omega_c_hz is not None:
        omega_c = 2.0 * math.pi * membrane.omega_c_hz
    else:
        omega_c = CONSTANTS.speed_of_light * k

    reflectivity, asymmetry, cavity_factor = derive_optics(
        membrane.eta, lattice.t, membrane.r_m, membrane.finesse
    )

    all_atoms = lattice.atom_number_mode == "all-atoms"
    n_optical = lattice.n_lat if all_atoms else lattice.grating_fraction * lattice.n_lat
    atoms_per_bs = n_optical / lattice.n_bs
    zeta = derive_zeta(atoms_per_bs, lattice.delta_la, lattice.natural_linewidth,
                       lattice.wavelength_m, sigma_l)
    nu = derive_nu(zeta, asymmetry)
    n_resonant = resonant_atom_number(
        lattice.n_lat, lattice.gamma_a_per_s, omega_m,
        trapped_fraction=lattice.trapped_fraction, mode=lattice.atom_number_mode,
    )

    x_zpf = zero_point_fluctuation(membrane.mass_kg, omega_m)
    coupling = optomechanical_coupling(membrane.g0_per_s, x_zpf)
    f_eff = effective_cavity_factor(coupling, k, membrane.kappa)

    intensity_in, intensity_back = lattice_intensities(lattice.power_w, lattice.t,
                                                       reflectivity, sigma_l)
    zeta_atom = derive_zeta(1.0, lattice.delta_la, lattice.natural_linewidth,
                            lattice.wavelength_m, sigma_l)
    omega_fields = omega_a_from_fields(zeta_atom, 1.0, lattice.atom_mass_kg, k, sigma_l,
                                       intensity_in, intensity_back)

    if lattice.omega_a_hz is not None:
        omega_a = 2.0 * math.pi * lattice.omega_a_hz
        if omega_fields > 0.0 and abs(omega_a - omega_fields) / omega_a > 0.05:
            logger.warning(
                f"Supplied Ω_a/2π = {omega_a / (2 * math.pi):.4g} Hz differs from the "
                f"field-derived {omega_fields / (2 * math.pi):.4g} Hz by more than 5%"
            )
    elif all_atoms:
        omega_a = omega_fields
    else:
        omega_a = omega_m

    stiffness_scale = (omega_a / omega_fields) ** 2 if omega_fields > 0.0 else 1.0
    coupling_fraction = (n_resonant / n_optical) * stiffness_scale if n_optical > 0.0 else 0.0

    g_n = _g_n(n_resonant, lattice.atom_mass_kg, membrane.mass_kg, omega_a, omega_m, cavity_factor)
    g_n_eff = _g_n(n_resonant, lattice.atom_mass_kg, membrane.mass_kg, omega_a, omega_m, f_eff)
    if lattice.gamma_a_per_s > 0.0:
        gamma_sym = 4.0 * (membrane.eta * lattice.t * g_n) ** 2 / lattice.gamma_a_per_s
        gamma_sym_eff = 4.0 * (membrane.eta * lattice.t * g_n_eff) ** 2 / lattice.gamma_a_per_s
    else:
        gamma_sym = math.inf if g_n > 0.0 else 0.0
        gamma_sym_eff = math.inf if g_n_eff > 0.0 else 0.0

    return DerivedParams(
        zeta=zeta,
        reflectivity=reflectivity,
        asymmetry=asymmetry,
        nu=nu,
        cavity_factor=cavity_factor,
        placed_cavity_factor=membrane.placement_factor * cavity_factor,
        g_n=g_n,
        gamma_sym=gamma_sym,
        n_resonant=n_resonant,
        wavenumber=k,
        sigma_l=sigma_l,
        omega_m=omega_m,
        kappa=membrane.kappa,
        omega_c=omega_c,
        gamma_m_prime=membrane.gamma_m_prime,
        x_zpf=x_zpf,
        optomechanical_coupling=coupling,
        effective_cavity_factor=f_eff,
        g_n_effective=g_n_eff,
        gamma_sym_effective=gamma_sym_eff,
        n_optical=n_optical,
        atoms_per_bs=atoms_per_bs,
        omega_a=omega_a,
        omega_a_fields=omega_fields,
        stiffness_scale=stiffness_scale,
        coupling_fraction=coupling_fraction,
        intensity_in=intensity_in,
        intensity_back=intensity_back,
        c0=field_amplitude(intensity_in),
        x_thermal=thermal_amplitude(membrane.mass_kg, omega_m, config.simulation.temperature_k),
    )
