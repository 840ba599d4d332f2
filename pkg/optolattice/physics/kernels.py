"""
Compiled inner loops of the nonlinear integrator.

The transfer-matrix force solve, the right-hand side of the equations of motion
and the fixed-step RK4 driver are jitted with numba. Scalar parameters travel in
one packed float64 array indexed by the ``P_*`` constants below, so the kernels
take plain arrays only.
"""

import cmath
import math

import numpy as np
from numba import njit

from optolattice.physics.params import CONSTANTS

NUMBA_CACHE = True
NUMBA_FASTMATH = False

VACUUM_PERMITTIVITY = CONSTANTS.vacuum_permittivity

P_PHASE = 0
P_PHASE_GAIN = 1
P_ETA = 2
P_TRANSMISSION = 3
P_WAVENUMBER = 4
P_C0 = 5
P_SIGMA = 6
P_INV_MASS = 7
P_GAMMA_A = 8
P_ANHARMONICITY = 9
P_GAMMA_M = 10
P_OMEGA_M_SQ = 11
P_X_ST = 12
P_FORCE_COEFF = 13
P_DRIVE = 14
P_REF_FORCE = 15
P_RAMP_DURATION = 16
P_RAMP_START = 17
P_FIXED_MIRROR = 18
N_PARAMS = 19


@njit(cache=NUMBA_CACHE, fastmath=NUMBA_FASTMATH)
def field_forces(positions, zetas, phase, eta, transmission, wavenumber, amplitude, sigma,
                 forces):
    """Fill ``forces`` with the radiation pressure on each sheet; return |C_m|².

    Same closed form as :func:`optolattice.physics.tmm.lattice_forces` for a real
    incoming amplitude.
    """
    c = 1.0 / transmission + 0j
    d = eta * transmission * cmath.exp(1j * phase)
    z_prev = 0.0
    for i in range(positions.shape[0]):
        shift = cmath.exp(1j * wavenumber * (positions[i] - z_prev))
        a = c / shift
        b = d * shift
        e = a + b
        zeta = zetas[i]
        forces[i] = (-2.0 * zeta * zeta * (e.real * e.real + e.imag * e.imag)
                     + 4.0 * zeta * (b.conjugate() * a).imag)
        c = a - 1j * zeta * e
        d = b + 1j * zeta * e
        z_prev = positions[i]
    scale_sq = amplitude * amplitude / (c.real * c.real + c.imag * c.imag)
    prefactor = 0.5 * VACUUM_PERMITTIVITY * sigma * scale_sq
    for i in range(positions.shape[0]):
        forces[i] *= prefactor
    return scale_sq


@njit(cache=NUMBA_CACHE, fastmath=NUMBA_FASTMATH)
def ramp_fraction(time, duration, start):
    if duration <= 0.0 or time >= duration:
        return 1.0
    if time <= 0.0:
        return start
    return start + (1.0 - start) * time / duration


@njit(cache=NUMBA_CACHE, fastmath=NUMBA_FASTMATH)
def derivative(time, y, out, steady_positions, zetas, params, positions, forces):
    """Write dy/dt into ``out``. ``positions`` and ``forces`` are scratch arrays.

    State layout: [x_m, v_m, x_1..x_n, v_1..v_n]. The optics see ``anharmonicity``
    times each displacement.
    """
    n = steady_positions.shape[0]
    a = params[P_ANHARMONICITY]
    frac = ramp_fraction(time, params[P_RAMP_DURATION], params[P_RAMP_START])
    fixed = params[P_FIXED_MIRROR] != 0.0
    x_m = y[0]

    phase = params[P_PHASE]
    if not fixed:
        phase += a * params[P_PHASE_GAIN] * x_m
    for i in range(n):
        positions[i] = steady_positions[i] + a * y[2 + i]
    scale_sq = field_forces(positions, zetas, phase, params[P_ETA], params[P_TRANSMISSION],
                            params[P_WAVENUMBER], params[P_C0] * math.sqrt(frac),
                            params[P_SIGMA], forces)

    inv_mass = params[P_INV_MASS]
    gamma_a = params[P_GAMMA_A]
    for i in range(n):
        out[2 + i] = y[2 + n + i]
        out[2 + n + i] = inv_mass * forces[i] / a - gamma_a * y[2 + n + i]

    if fixed:
        out[0] = 0.0
        out[1] = 0.0
        return
    force = params[P_FORCE_COEFF] * scale_sq
    out[0] = y[1]
    out[1] = (-params[P_GAMMA_M] * y[1]
              - params[P_OMEGA_M_SQ] * (x_m + (1.0 - frac) * params[P_X_ST])
              + params[P_DRIVE] * (force - frac * params[P_REF_FORCE]) / a)


@njit(cache=NUMBA_CACHE, fastmath=NUMBA_FASTMATH)
def rk4_run(y0, dt, n_steps, record_every, steady_positions, zetas, params, hop_limit,
            record, last):
    """Classical RK4 from ``y0``; every ``record_every``-th state goes into ``record``.

    Returns ``(failed_step, hop_step)``: the step that produced a non-finite state
    (0 if none) and the first step at which a sheet left its well (-1 if none).
    ``last`` receives the final finite state.
    """
    width = y0.shape[0]
    n = steady_positions.shape[0]
    a = params[P_ANHARMONICITY]
    y = y0.copy()
    k1 = np.empty(width)
    k2 = np.empty(width)
    k3 = np.empty(width)
    k4 = np.empty(width)
    stage = np.empty(width)
    positions = np.empty(n)
    forces = np.empty(n)
    half = 0.5 * dt
    sixth = dt / 6.0

    record[0, :] = y
    hop_step = -1
    for step in range(1, n_steps + 1):
        t = (step - 1) * dt
        derivative(t, y, k1, steady_positions, zetas, params, positions, forces)
        for j in range(width):
            stage[j] = y[j] + half * k1[j]
        derivative(t + half, stage, k2, steady_positions, zetas, params, positions, forces)
        for j in range(width):
            stage[j] = y[j] + half * k2[j]
        derivative(t + half, stage, k3, steady_positions, zetas, params, positions, forces)
        for j in range(width):
            stage[j] = y[j] + dt * k3[j]
        derivative(t + dt, stage, k4, steady_positions, zetas, params, positions, forces)

        finite = True
        for j in range(width):
            stage[j] = y[j] + sixth * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j])
            if not math.isfinite(stage[j]):
                finite = False
        if not finite:
            last[:] = y
            return step, hop_step
        y[:] = stage

        if hop_step < 0:
            for i in range(n):
                if abs(a * y[2 + i]) > hop_limit:
                    hop_step = step
                    break
        if step % record_every == 0:
            record[step // record_every, :] = y
    last[:] = y
    return 0, hop_step
