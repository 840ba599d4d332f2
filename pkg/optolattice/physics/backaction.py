"""
Atomic back-action on the lattice light.

A phase modulation Φ̃(Ω) imposed on the returning lattice beam drives the atoms,
which in turn modulate the power δP̃(Ω) of the incoming beam. The one- and two-sheet
models give closed-form transfer functions; sweeps unwrap their phase from the low
frequency end and report the delay as the negative phase.
"""

import logging
import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, List, Literal, Optional, Sequence

import numpy as np

from optolattice.error_handling import ConfigError, PoleError
from optolattice.physics.params import CONSTANTS, derive_nu, derive_optics, derive_zeta

if TYPE_CHECKING:
    from optolattice.config_manager import SystemConfig

logger = logging.getLogger(__name__)

MILLIWATT = 1e-3


@dataclass(frozen=True)
class TransferFunctionPoint:
    """One frequency of a sweep; ``response`` in W/rad."""
    omega: float
    response: complex
    phase_deg: float = float("nan")
    flagged: bool = False

    @property
    def delay_deg(self) -> float:
        return -self.phase_deg


@dataclass(frozen=True)
class CalibrationChain:
    """Conversion of the optical response into detected electrical power."""
    phi_rms: float
    pickup: float
    pd_conversion: float
    impedance: float
    bandwidth: float

    def __post_init__(self):
        for name in ("phi_rms", "pickup", "pd_conversion", "impedance", "bandwidth"):
            if getattr(self, name) <= 0.0:
                raise ConfigError(f"calibration {name} must be positive",
                                  {name: getattr(self, name)})
        if self.pickup > 1.0:
            raise ConfigError("pickup fraction cannot exceed 1", {"pickup": self.pickup})


@dataclass(frozen=True)
class BackactionParams:
    omega_a: float
    gamma_a: float
    n_atoms: float
    atom_mass: float
    wavenumber: float
    nu: float


def response_prefactor(n_atoms: float, atom_mass: float, omega_a: float,
                       wavenumber: float) -> float:
    """(c/2)·NmΩ_a²/(2k), the high-frequency magnitude of the 1-BS response."""
    return 0.5 * CONSTANTS.speed_of_light * n_atoms * atom_mass * omega_a ** 2 / (2.0 * wavenumber)


def tf_one_bs(omega: complex, omega_a: float, gamma_a: float, n_atoms: float, atom_mass: float,
              wavenumber: float) -> complex:
    """Back-action of a single sheet, −(c/2)(NmΩ_a²/2k)(1 − Ω_a²/(Ω_a² − Ω² + iΓ_aΩ)).

    Raises:
        PoleError: On the undamped resonance Γ_a = 0, Ω = Ω_a.
    """
    resonance = omega_a ** 2 - omega * omega + 1j * gamma_a * omega
    if resonance == 0:
        raise PoleError("undamped atomic resonance", {"omega": omega, "omega_a": omega_a})
    pre = response_prefactor(n_atoms, atom_mass, omega_a, wavenumber)
    return -pre * (-omega * omega + 1j * gamma_a * omega) / resonance


def tf_two_bs(omega: complex, omega_a: float, gamma_a: float, n_atoms: float, atom_mass: float,
              wavenumber: float, nu: float) -> complex:
    """Back-action of two interacting sheets; equals :func:`tf_one_bs` at ν = 0.

    Raises:
        PoleError: When the denominator vanishes.
    """
    w2 = omega_a ** 2
    denominator = (gamma_a * omega + 1j * (omega * omega + (nu - 1.0) * w2)) ** 2
    if denominator == 0:
        raise PoleError("undamped collective resonance", {"omega": omega, "nu": nu})
    pre = response_prefactor(n_atoms, atom_mass, omega_a, wavenumber)
    drive = omega * (-1j * gamma_a + omega)
    numerator = drive * ((1.0 - 5.0 * nu) * drive - (nu - 1.0) ** 2 * w2)
    return pre * numerator / denominator


def evaluate(model: Literal["one", "two"], omega: float, params: BackactionParams) -> complex:
    if model == "one":
        return tf_one_bs(omega, params.omega_a, params.gamma_a, params.n_atoms,
                         params.atom_mass, params.wavenumber)
    if model == "two":
        return tf_two_bs(omega, params.omega_a, params.gamma_a, params.n_atoms,
                         params.atom_mass, params.wavenumber, params.nu)
    raise ConfigError(f"unknown back-action model {model!r}")


def frequency_grid(omega_min: float, omega_max: float, n_points: int,
                   grid: Literal["log", "linear"] = "log") -> np.ndarray:
    if not 0.0 < omega_min < omega_max:
        raise ConfigError("sweep range must be positive and increasing",
                          {"omega_min": omega_min, "omega_max": omega_max})
    if n_points < 2:
        raise ConfigError("sweep needs at least two points", {"n_points": n_points})
    if grid == "log":
        return np.geomspace(omega_min, omega_max, n_points)
    if grid == "linear":
        return np.linspace(omega_min, omega_max, n_points)
    raise ConfigError(f"unknown grid {grid!r}")


def sweep_tf(model: Literal["one", "two"], omega_min: float, omega_max: float, n_points: int,
             params: BackactionParams,
             grid: Literal["log", "linear"] = "log") -> List[TransferFunctionPoint]:
    """Evaluate a transfer function over a frequency grid.

    Phases are unwrapped continuously from the lowest frequency, starting in
    (−360°, 0°]. Grid points on a pole are kept but flagged.
    """
    omegas = frequency_grid(omega_min, omega_max, n_points, grid)
    responses = []
    flagged = []
    for omega in omegas:
        try:
            responses.append(evaluate(model, float(omega), params))
            flagged.append(False)
        except PoleError:
            logger.warning(f"Skipping pole at Ω = {omega:.6e} rad/s")
            responses.append(complex("nan"))
            flagged.append(True)

    valid = [i for i, bad in enumerate(flagged) if not bad]
    phases = np.full(len(omegas), np.nan)
    if valid:
        unwrapped = np.unwrap(np.angle([responses[i] for i in valid]))
        unwrapped -= 2.0 * np.pi * math.ceil(unwrapped[0] / (2.0 * np.pi))
        phases[valid] = np.degrees(unwrapped)

    return [TransferFunctionPoint(omega=float(omega), response=response,
                                  phase_deg=float(phase), flagged=bad)
            for omega, response, phase, bad in zip(omegas, responses, phases, flagged)]


def max_phase_delay(points: Sequence[TransferFunctionPoint]) -> float:
    """Largest delay (degrees) over the unflagged points of a sweep."""
    delays = [p.delay_deg for p in points if not p.flagged and math.isfinite(p.phase_deg)]
    if not delays:
        return float("nan")
    return max(delays)


def electrical_calibration(response: complex, chain: CalibrationChain,
                           offset_db: Optional[float] = None) -> float:
    """Detected electrical power in dBm; −inf for a vanishing response.

    ``offset_db`` is an explicit data-alignment shift and is only added when given.
    """
    amplitude = abs(response) * chain.phi_rms * chain.pickup * chain.pd_conversion
    power = amplitude ** 2 / chain.impedance
    if power == 0.0:
        return float("-inf")
    level = 10.0 * math.log10(power / MILLIWATT)
    return level + offset_db if offset_db is not None else level


def backaction_params_from_config(config: "SystemConfig") -> BackactionParams:
    """Back-action ensemble parameters; all atoms take part.

    ν comes from the reflectivity R = η·t² of the measurement path and the
    polarizability of one sheet of the ensemble, unless ``backaction.nu`` is set.
    """
    ba = config.backaction
    lattice = config.lattice
    if ba.nu is not None:
        nu = ba.nu
    else:
        _, asymmetry, _ = derive_optics(config.membrane.eta, ba.t, 0.0, 1.0)
        zeta = derive_zeta(ba.n_atoms / ba.n_bs, 2.0 * math.pi * ba.delta_la_hz,
                           lattice.natural_linewidth, lattice.wavelength_m, lattice.sigma_l)
        nu = derive_nu(zeta, asymmetry)
    if nu >= 1.0:
        logger.warning(f"Back-action ν = {nu:.3g} lies outside the two-sheet expansion (ν < 1)")
    return BackactionParams(
        omega_a=2.0 * math.pi * ba.omega_a_hz,
        gamma_a=2.0 * math.pi * ba.gamma_a_hz,
        n_atoms=ba.n_atoms,
        atom_mass=lattice.atom_mass_kg,
        wavenumber=lattice.wavenumber,
        nu=nu,
    )


def calibration_chain_from_config(config: "SystemConfig") -> CalibrationChain:
    ba = config.backaction
    return CalibrationChain(
        phi_rms=ba.phi_rms_rad,
        pickup=ba.pickup,
        pd_conversion=ba.pd_conversion_v_per_w,
        impedance=ba.impedance_ohm,
        bandwidth=ba.bandwidth_hz,
    )
