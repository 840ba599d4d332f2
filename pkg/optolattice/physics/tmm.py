"""
Transfer-matrix solver for the light field through the beam-splitter stack.

Field convention: each plane carries a ``FieldPair`` of a rightward amplitude
(travelling away from the membrane, +z) and a leftward amplitude (travelling
toward the membrane). Transfer matrices act on the vector ``[leftward, rightward]``
and map the fields on the far side of an element onto its membrane side. The
membrane-cavity sits at the membrane plane and reflects ``rightward = η·e^{iΦ}·leftward``.
Between the membrane plane and the reference plane z = 0 on the atom side the light
passes a lossy path of amplitude transmission t in each direction.

The cavity is an instantaneous boundary condition: fields follow the mechanics
adiabatically.
"""

import cmath
import logging
from dataclasses import dataclass
from typing import List, Sequence, Tuple, Union

import numpy as np

from optolattice.error_handling import GeometryError
from optolattice.physics.params import CONSTANTS

logger = logging.getLogger(__name__)

ZetaLike = Union[float, Sequence[float], np.ndarray]


@dataclass(frozen=True)
class FieldPair:
    """Counter-propagating amplitudes at one plane, in √(W/m²)-scaled field units."""
    rightward: complex
    leftward: complex

    def scaled(self, factor: complex) -> "FieldPair":
        return FieldPair(self.rightward * factor, self.leftward * factor)


@dataclass(frozen=True)
class FieldSolution:
    """Fields at every plane of a solved stack.

    ``left[i]`` and ``right[i]`` are the fields just on the membrane side and just on
    the far side of beam splitter ``i``. In the notation of the force law, the left
    pair holds (A_i leftward, B_i rightward) and the right pair (C_i leftward,
    D_i rightward).
    """
    membrane: FieldPair
    reference: FieldPair
    left: Tuple[FieldPair, ...]
    right: Tuple[FieldPair, ...]
    positions: Tuple[float, ...]
    c0: complex
    phase: float

    @property
    def planes(self) -> List[FieldPair]:
        """All planes ordered from the membrane outward."""
        ordered = [self.membrane, self.reference]
        for left, right in zip(self.left, self.right):
            ordered.extend((left, right))
        return ordered

    @property
    def outer(self) -> FieldPair:
        """Fields at the rightmost plane, where the lattice beam enters."""
        return self.right[-1] if self.right else self.reference


def bs_matrix(zeta: float) -> np.ndarray:
    """Transfer matrix of a thin polarizable sheet; det = 1."""
    return np.array([[1.0 + 1j * zeta, 1j * zeta],
                     [-1j * zeta, 1.0 - 1j * zeta]], dtype=complex)


def prop_matrix(distance: float, wavenumber: float) -> np.ndarray:
    """Free propagation over ``distance``, mapping the far plane onto the near one."""
    phase = wavenumber * distance
    return np.diag([np.exp(1j * phase), np.exp(-1j * phase)])


def _as_zetas(zeta: ZetaLike, count: int) -> List[float]:
    return [float(z) for z in np.broadcast_to(np.asarray(zeta, dtype=float), (count,))]


def validate_positions(positions: Sequence[float], wavelength: float) -> None:
    """Reject stacks that are not strictly increasing or whose elements overlap."""
    z = np.asarray(positions, dtype=float)
    if z.size == 0:
        return
    if not np.all(np.isfinite(z)):
        raise GeometryError("beam splitter positions must be finite")
    if z[0] < 0.0:
        raise GeometryError("first beam splitter lies behind the reference plane",
                            {"position": float(z[0])})
    gaps = np.diff(z)
    if np.any(gaps <= 0.0):
        index = int(np.argmax(gaps <= 0.0))
        raise GeometryError("beam splitter positions must increase away from the membrane",
                            {"index": index + 1})
    if np.any(gaps < wavelength * 1e-6):
        index = int(np.argmax(gaps < wavelength * 1e-6))
        raise GeometryError("overlapping beam splitters", {"index": index + 1,
                                                           "gap": float(gaps[index])})


def _scatter(positions: Sequence[float], zetas: Sequence[float], phase: float, eta: float,
             transmission: float, wavenumber: float):
    """Unnormalized fields, seeded with a unit leftward wave at the membrane."""
    c = 1.0 / transmission + 0j
    d = eta * cmath.exp(1j * phase) * transmission
    reference = (c, d)
    lefts = []
    rights = []
    z_prev = 0.0
    for z, zeta in zip(positions, zetas):
        shift = cmath.exp(1j * wavenumber * (z - z_prev))
        a = c / shift
        b = d * shift
        e = a + b
        c = a - 1j * zeta * e
        d = b + 1j * zeta * e
        lefts.append((a, b))
        rights.append((c, d))
        z_prev = z
    return reference, lefts, rights, c


def solve_fields(bs_positions: Sequence[float], zeta: ZetaLike, phase: float, eta: float,
                 c0: complex, wavenumber: float, transmission: float = 1.0) -> FieldSolution:
    """Solve the stack for a lattice beam of leftward amplitude ``c0`` at the outer plane.

    Args:
        bs_positions: Beam splitter positions measured from the reference plane (m).
        zeta: Polarizability density, scalar or one value per beam splitter.
        phase: Membrane phase Φ (rad).
        eta: Incoupling efficiency of the membrane-cavity reflection.
        c0: Incoming amplitude at the rightmost plane.
        wavenumber: Lattice wavenumber k (1/m).
        transmission: Path amplitude transmission t between membrane and atoms.

    Raises:
        GeometryError: For non-monotone or overlapping positions.
    """
    positions = [float(z) for z in bs_positions]
    validate_positions(positions, 2.0 * np.pi / wavenumber)
    zetas = _as_zetas(zeta, len(positions))

    reference, lefts, rights, c_outer = _scatter(positions, zetas, phase, eta, transmission,
                                                 wavenumber)
    scale = complex(c0) / c_outer

    def pair(fields: Tuple[complex, complex]) -> FieldPair:
        return FieldPair(rightward=fields[1] * scale, leftward=fields[0] * scale)

    return FieldSolution(
        membrane=FieldPair(rightward=eta * cmath.exp(1j * phase) * scale, leftward=scale),
        reference=pair(reference),
        left=tuple(pair(f) for f in lefts),
        right=tuple(pair(f) for f in rights),
        positions=tuple(positions),
        c0=complex(c0),
        phase=phase,
    )


def bs_force(fields_left: FieldPair, fields_right: FieldPair, sigma_l: float) -> float:
    """Radiation pressure on one beam splitter, positive away from the membrane."""
    flux = (abs(fields_left.leftward) ** 2 + abs(fields_left.rightward) ** 2
            - abs(fields_right.leftward) ** 2 - abs(fields_right.rightward) ** 2)
    return 0.5 * CONSTANTS.vacuum_permittivity * sigma_l * flux


def momentum_flux(fields: FieldPair, sigma_l: float) -> float:
    """Momentum flux ε₀σ_L(|left|² + |right|²)/2 through a plane (N)."""
    return 0.5 * CONSTANTS.vacuum_permittivity * sigma_l * (
        abs(fields.leftward) ** 2 + abs(fields.rightward) ** 2
    )


def membrane_input_power(c_m: complex, eta: float, sigma_l: float) -> float:
    return 0.5 * sigma_l * CONSTANTS.vacuum_permittivity * CONSTANTS.speed_of_light * abs(
        eta * c_m
    ) ** 2


def membrane_force(c_m: complex, eta: float, coupling: float, omega_c: float, kappa: float,
                   sigma_l: float) -> float:
    """Radiation pressure on the membrane, F_m = (4G/ω_cκ)·P_in."""
    return 4.0 * coupling / (omega_c * kappa) * membrane_input_power(c_m, eta, sigma_l)


def lattice_forces(positions: Sequence[float], zetas: Sequence[float], phase: float, eta: float,
                   transmission: float, wavenumber: float, c0: complex,
                   sigma_l: float) -> Tuple[List[float], complex]:
    """Forces on every beam splitter and the membrane-plane amplitude, in one pass.

    Positions are not validated. The force on each sheet uses the closed form of
    the flux difference, which avoids cancellation between nearly equal fluxes.
    """
    _, lefts, _, c_outer = _scatter(positions, zetas, phase, eta, transmission, wavenumber)
    scale = complex(c0) / c_outer
    prefactor = 0.5 * CONSTANTS.vacuum_permittivity * sigma_l * abs(scale) ** 2
    forces = []
    for (a, b), zeta in zip(lefts, zetas):
        e = a + b
        forces.append(prefactor * (
            -2.0 * zeta * zeta * (e.real * e.real + e.imag * e.imag)
            + 4.0 * zeta * (b.conjugate() * a).imag
        ))
    return forces, scale
