"""
Linearized two-beam-splitter model of the atom-membrane system.

Equations of motion, for the membrane and two sheets:

    ẍ_m + Γ_m'ẋ_m + Ω_m²x_m = k_mm x_m + k_m1 x_1(t−τ) + k_m2 x_2(t−τ)
    ẍ_i + Γ_a ẋ_i          = k_im x_m(t−τ) + k_i1 x_1 + k_i2 x_2

The retardation τ acts only on the cross couplings between atoms and membrane.
"""

import logging
import math
from dataclasses import dataclass, replace
from typing import TYPE_CHECKING, Literal, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import linalg, optimize

from optolattice.error_handling import ConfigError, ConvergenceError, LatticeOverdrivenError
from optolattice.physics.dynamics import EquationsOfMotion, RampSchedule, SystemState, Trajectory
from optolattice.physics.steadystate import solve_steady_state

if TYPE_CHECKING:
    from optolattice.config_manager import SystemConfig
    from optolattice.physics.params import DerivedParams

logger = logging.getLogger(__name__)

TIE_TOLERANCE = 1e-6
ILL_CONDITIONED = 1e12
MIN_MEMBRANE_WEIGHT = 0.05
FD_PHASE_STEP = 1e-6


@dataclass(frozen=True)
class LinearModel:
    """Coefficients (1/s²) and damping rates of the linearized equations."""
    k_mm: float
    k_m1: float
    k_m2: float
    k_1m: float
    k_2m: float
    k_11: float
    k_12: float
    k_21: float
    k_22: float
    gamma_m_prime: float
    gamma_a: float
    omega_m: float
    tau: float = 0.0

    def __post_init__(self):
        if self.k_12 != 0.0:
            raise ConfigError("the lattice cascade has no back coupling: k_12 must be 0",
                              {"k_12": self.k_12})
        if self.tau < 0.0:
            raise ConfigError("delay must be non-negative", {"tau": self.tau})

    def stiffness_matrices(self) -> Tuple[np.ndarray, np.ndarray]:
        """Instantaneous (K0) and retarded (Kτ) stiffness, coordinates (x_m, x_1, x_2)."""
        k_now = np.array([
            [-self.omega_m ** 2 + self.k_mm, 0.0, 0.0],
            [0.0, self.k_11, self.k_12],
            [0.0, self.k_21, self.k_22],
        ])
        k_delayed = np.array([
            [0.0, self.k_m1, self.k_m2],
            [self.k_1m, 0.0, 0.0],
            [self.k_2m, 0.0, 0.0],
        ])
        return k_now, k_delayed

    def damping_matrix(self) -> np.ndarray:
        return np.diag([self.gamma_m_prime, self.gamma_a, self.gamma_a])

    def companion_matrix(self) -> np.ndarray:
        """6×6 first-order system for (x, ẋ), with the delay ignored."""
        k_now, k_delayed = self.stiffness_matrices()
        top = np.hstack([np.zeros((3, 3)), np.eye(3)])
        bottom = np.hstack([k_now + k_delayed, -self.damping_matrix()])
        return np.vstack([top, bottom])


@dataclass(frozen=True)
class StabilityResult:
    eigenvalues: np.ndarray
    selected: complex
    gamma_tot: float
    condition: float
    membrane_weight: float

    @property
    def frequency(self) -> float:
        return abs(self.selected.imag)


@dataclass(frozen=True)
class DelayResult:
    eigenvalue: complex
    gamma_tot: float
    tau: float


def linear_coefficients(n_atoms: float, atom_mass: float, membrane_mass: float, omega_a: float,
                        reflectivity: float, cavity_factor: float, nu: float, *,
                        gamma_m_prime: float = 0.0, gamma_a: float = 0.0,
                        omega_m: Optional[float] = None, tau: float = 0.0) -> LinearModel:
    """Coefficients of the linearized equations for two beam splitters.

    ``omega_m`` defaults to ``omega_a``.
    """
    pre = n_atoms * atom_mass / (2.0 * membrane_mass) * omega_a ** 2 * reflectivity
    w2 = omega_a ** 2
    f = cavity_factor
    return LinearModel(
        k_mm=pre * (-2.0 + 10.0 * nu) * f * f,
        k_m1=pre * (1.0 - 9.0 * nu) * f,
        k_m2=pre * (1.0 - nu) * f,
        k_1m=w2 * (1.0 - nu) * f,
        k_2m=w2 * (1.0 - 9.0 * nu) * f,
        k_11=w2 * (-1.0 + nu),
        k_12=0.0,
        k_21=w2 * 8.0 * nu,
        k_22=w2 * (-1.0 + nu),
        gamma_m_prime=gamma_m_prime,
        gamma_a=gamma_a,
        omega_m=omega_a if omega_m is None else omega_m,
        tau=tau,
    )


def _formula_model(config: "SystemConfig", derived: "DerivedParams",
                   cavity_factor: Literal["effective", "bare"], tau: float) -> LinearModel:
    factor = derived.effective_cavity_factor if cavity_factor == "effective" else derived.cavity_factor
    return linear_coefficients(
        derived.n_resonant, config.lattice.atom_mass_kg, config.membrane.mass_kg,
        derived.omega_a, derived.reflectivity, factor, derived.nu,
        gamma_m_prime=derived.gamma_m_prime, gamma_a=config.lattice.gamma_a_per_s,
        omega_m=derived.omega_m, tau=tau,
    )


def force_stiffness(config: "SystemConfig", derived: Optional["DerivedParams"] = None,
                    phase_step: float = FD_PHASE_STEP) -> np.ndarray:
    """Jacobian of the accelerations with respect to (x_m, x_1, ..., x_n) at the steady state.

    Central differences of the nonlinear right-hand side at full power, with steps
    that move the optical phase by ``phase_step``. The membrane row includes −Ω_m².
    """
    derived = derived or config.derived()
    steady = solve_steady_state(config, derived)
    rhs = EquationsOfMotion(config, derived, steady, RampSchedule())
    n = rhs.n
    a = rhs.anharmonicity
    h_atom = phase_step / (2.0 * derived.wavenumber * a)
    h_membrane = phase_step / (rhs.phase_gain * a) if rhs.phase_gain > 0.0 else h_atom

    coordinates = [0, *range(2, 2 + n)]
    accelerations = [1, *range(2 + n, 2 + 2 * n)]
    steps = [h_membrane] + [h_atom] * n
    jacobian = np.empty((n + 1, n + 1))
    y = np.zeros(2 + 2 * n)
    for column, (index, step) in enumerate(zip(coordinates, steps)):
        y[index] = step
        up = rhs(0.0, y)[accelerations]
        y[index] = -step
        down = rhs(0.0, y)[accelerations]
        y[index] = 0.0
        jacobian[:, column] = (up - down) / (2.0 * step)
    return jacobian


def _force_model(config: "SystemConfig", derived: "DerivedParams", tau: float) -> LinearModel:
    jacobian = force_stiffness(config, derived)
    logger.debug(f"Discarding back coupling k_12 = {jacobian[1, 2]:.3e} s⁻²")
    return LinearModel(
        k_mm=float(jacobian[0, 0] + derived.omega_m ** 2),
        k_m1=float(jacobian[0, 1]),
        k_m2=float(jacobian[0, 2]),
        k_1m=float(jacobian[1, 0]),
        k_2m=float(jacobian[2, 0]),
        k_11=float(jacobian[1, 1]),
        k_12=0.0,
        k_21=float(jacobian[2, 1]),
        k_22=float(jacobian[2, 2]),
        gamma_m_prime=derived.gamma_m_prime,
        gamma_a=config.lattice.gamma_a_per_s,
        omega_m=derived.omega_m,
        tau=tau,
    )


def linear_model_for(config: "SystemConfig", derived: Optional["DerivedParams"] = None, *,
                     method: Literal["forces", "formula"] = "forces",
                     cavity_factor: Literal["effective", "bare"] = "effective",
                     tau: Optional[float] = None) -> LinearModel:
    """Linear model of the same two-sheet system the nonlinear simulation integrates.

    ``"forces"`` differentiates the nonlinear equations of motion at the steady
    state, so both descriptions share one force model. ``"formula"`` evaluates the
    closed-form coefficients to first order in ν, with the effective cavity factor
    2G/(kκ) or, for ``cavity_factor="bare"``, 2|r_m|(2F/π). The lattice is always
    treated as two sheets. The cascade has no back coupling, so k_12 is set to 0.
    """
    if config.lattice.n_bs != 2:
        config = config.with_overrides({"lattice.n_bs": 2})
        derived = None
    derived = derived or config.derived()
    if tau is None:
        tau = config.delay.tau_s if config.delay.enabled else 0.0
    if method == "formula":
        return _formula_model(config, derived, cavity_factor, tau)
    if method != "forces":
        raise ConfigError(f"unknown linear model method {method!r}", {"method": method})
    return _force_model(config, derived, tau)


def _scaled_companion(model: LinearModel) -> Tuple[np.ndarray, float]:
    # Atom coordinates weighted by λ = √(|k_m·|/|k_·m|) and time measured in 1/Ω_m;
    # the membrane and atom entries of the eigenvectors then compare directly.
    forward = abs(model.k_m1) + abs(model.k_m2)
    backward = abs(model.k_1m) + abs(model.k_2m)
    lam = math.sqrt(forward / backward) if forward > 0.0 and backward > 0.0 else 1.0
    scale = np.array([1.0, lam, lam])
    k_now, k_delayed = model.stiffness_matrices()
    stiffness = (k_now + k_delayed) * scale[:, None] / scale[None, :] / model.omega_m ** 2
    top = np.hstack([np.zeros((3, 3)), np.eye(3)])
    bottom = np.hstack([stiffness, -model.damping_matrix() / model.omega_m])
    return np.vstack([top, bottom]), lam


def _membrane_weight(vectors: np.ndarray, index: int) -> float:
    positions = vectors[:3, index]
    norm = np.linalg.norm(positions)
    return float(abs(positions[0]) / norm) if norm > 0.0 else 0.0


def _select_mode(values: np.ndarray, vectors: np.ndarray, omega_m: float,
                 selection: str) -> Tuple[int, float]:
    candidates = np.nonzero(values.imag >= 0.0)[0]
    weights = {int(i): _membrane_weight(vectors, int(i)) for i in candidates}
    if selection == "nearest":
        distance = np.abs(np.abs(values.imag[candidates]) - omega_m)
        best = distance.min()
        tied = candidates[distance <= best + TIE_TOLERANCE * omega_m]
        chosen = max((int(i) for i in tied), key=weights.__getitem__)
        return chosen, weights[chosen]
    if selection != "least-damped":
        raise ConfigError(f"unknown mode selection {selection!r}", {"selection": selection})
    eligible = [i for i, weight in weights.items() if weight >= MIN_MEMBRANE_WEIGHT]
    if not eligible:
        chosen = max(weights, key=weights.__getitem__)
    else:
        chosen = max(eligible, key=lambda i: values[i].real)
    return chosen, weights[chosen]


def stability_eigenvalues(model: LinearModel,
                          selection: Literal["least-damped", "nearest"] = "least-damped"
                          ) -> StabilityResult:
    """Eigenvalues of the instantaneous model and Γ_tot of the membrane-like mode.

    The eigenproblem is solved with atom coordinates rescaled so that the membrane
    share of an eigenvector is comparable to the atoms'. ``"least-damped"`` picks
    the slowest-decaying (or fastest-growing) mode among those whose membrane share
    is at least 5%, falling back to the largest share. ``"nearest"`` picks the
    eigenvalue whose |Im| is nearest Ω_m, ties within 1e−6·Ω_m going to the larger
    membrane share.
    """
    if model.tau != 0.0:
        raise ConfigError("retarded models are handled by delay_eigenvalues",
                          {"tau": model.tau})
    companion, _ = _scaled_companion(model)
    values, vectors = linalg.eig(companion)
    values = values * model.omega_m
    order = np.lexsort((values.real, values.imag))
    values = values[order]
    vectors = vectors[:, order]

    condition = float(np.linalg.cond(vectors))
    if not math.isfinite(condition) or condition > ILL_CONDITIONED:
        logger.warning(f"Ill-conditioned eigenproblem, eigenvector condition {condition:.3e}")

    index, weight = _select_mode(values, vectors, model.omega_m, selection)
    selected = complex(values[index])
    return StabilityResult(
        eigenvalues=values,
        selected=selected,
        gamma_tot=-2.0 * selected.real,
        condition=condition,
        membrane_weight=weight,
    )


def characteristic_determinant(model: LinearModel, s: complex, tau: float) -> complex:
    """det(s²I + sD − K0 − Kτ·e^{−sτ})."""
    k_now, k_delayed = model.stiffness_matrices()
    matrix = s * s * np.eye(3) + s * model.damping_matrix() - k_now - k_delayed * np.exp(-s * tau)
    return complex(np.linalg.det(matrix))


def delay_eigenvalues(model: LinearModel, tau: Optional[float] = None, steps: int = 8,
                      tolerance: float = 1e-10) -> DelayResult:
    """Membrane-like root of the retarded characteristic equation.

    The root is continued from τ = 0 in ``steps`` equal increments, each refined with
    a hybrid Newton solve on the real and imaginary parts of the scaled determinant.

    Raises:
        ConvergenceError: If a continuation step fails.
    """
    tau = model.tau if tau is None else tau
    if tau < 0.0:
        raise ConfigError("delay must be non-negative", {"tau": tau})
    root = stability_eigenvalues(replace(model, tau=0.0)).selected
    if tau == 0.0:
        return DelayResult(eigenvalue=root, gamma_tot=-2.0 * root.real, tau=0.0)

    scale = model.omega_m
    for tau_j in np.linspace(0.0, tau, steps + 1)[1:]:
        def residual(u: np.ndarray, tau_j: float = tau_j) -> list:
            value = characteristic_determinant(model, complex(u[0], u[1]) * scale, tau_j)
            value /= scale ** 6
            return [value.real, value.imag]

        guess = [root.real / scale, root.imag / scale]
        solution = optimize.root(residual, guess, method="hybr", options={"xtol": 1e-13})
        error = float(np.hypot(*residual(solution.x)))
        if not solution.success and error > tolerance:
            raise ConvergenceError(f"delay continuation failed at τ = {tau_j:.3e} s",
                                   residual=error, context={"tau": float(tau_j)})
        root = complex(solution.x[0], solution.x[1]) * scale

    return DelayResult(eigenvalue=root, gamma_tot=-2.0 * root.real, tau=float(tau))


def instability_threshold(config: "SystemConfig", tau: float = 0.0,
                          bracket: Tuple[float, float] = (1e6, 1e10), points: int = 25,
                          method: Literal["forces", "formula"] = "forces",
                          cavity_factor: Literal["effective", "bare"] = "effective"
                          ) -> Optional[float]:
    """Smallest N_lat in ``bracket`` at which the linear Γ_tot changes sign.

    A log-spaced scan walks up from the lower end and stops at the first sign
    change, which Brent's method then refines in log N_lat. The scan also stops
    where the lattice becomes overdriven. Returns None when Γ_tot stays positive.
    """
    def gamma_tot(log_n: float) -> float:
        trial = config.with_overrides({"lattice.n_lat": float(10.0 ** log_n)})
        model = linear_model_for(trial, method=method, cavity_factor=cavity_factor, tau=tau)
        if tau > 0.0:
            return delay_eigenvalues(model).gamma_tot
        return stability_eigenvalues(model).gamma_tot

    grid = np.linspace(math.log10(bracket[0]), math.log10(bracket[1]), points)
    previous: Optional[Tuple[float, float]] = None
    for x in grid:
        try:
            value = gamma_tot(float(x))
        except LatticeOverdrivenError:
            logger.info(f"Threshold scan stopped at overdriven N_lat = {10.0 ** x:.3e}")
            return None
        if previous is not None and previous[1] > 0.0 >= value:
            log_n = optimize.brentq(gamma_tot, previous[0], float(x), xtol=1e-10)
            return float(10.0 ** log_n)
        previous = (float(x), value)
    return None


class _HistoryBuffer:
    """Ring buffer of past positions and velocities with cubic Hermite lookup."""

    def __init__(self, initial: np.ndarray, dt: float, tau: float):
        self.dt = dt
        self.size = int(math.ceil(tau / dt)) + 4
        self.x = np.zeros((self.size, 3))
        self.v = np.zeros((self.size, 3))
        self.initial = initial[:3].copy()
        self.latest = -1

    def push(self, step: int, y: np.ndarray) -> None:
        slot = step % self.size
        self.x[slot] = y[:3]
        self.v[slot] = y[3:]
        self.latest = step

    def positions(self, time: float) -> np.ndarray:
        if time <= 0.0:
            return self.initial
        j = int(time // self.dt)
        if j >= self.latest:
            j = self.latest - 1
        u = time / self.dt - j
        a = j % self.size
        b = (j + 1) % self.size
        h00 = (1.0 + 2.0 * u) * (1.0 - u) ** 2
        h10 = u * (1.0 - u) ** 2
        h01 = u * u * (3.0 - 2.0 * u)
        h11 = u * u * (u - 1.0)
        return (h00 * self.x[a] + h10 * self.dt * self.v[a]
                + h01 * self.x[b] + h11 * self.dt * self.v[b])


def integrate_dde(model: LinearModel, history: Union[SystemState, Sequence[float]],
                  duration: float, dt: float, tau: Optional[float] = None,
                  record_every: int = 1) -> Trajectory:
    """Fixed-step RK4 integration of the retarded linear equations.

    The history before t = 0 is held constant at ``history``; later delayed values come
    from cubic Hermite interpolation of the stored steps. With τ = 0 every stage uses
    its own state, which reproduces the instantaneous model exactly.

    Raises:
        ConfigError: If τ > 0 and dt > τ/4.
    """
    tau = model.tau if tau is None else tau
    if tau < 0.0:
        raise ConfigError("delay must be non-negative", {"tau": tau})
    if tau > 0.0 and dt > tau / 4.0:
        raise ConfigError(f"time step {dt:.3e} s too coarse for delay {tau:.3e} s",
                          {"dt": dt, "tau": tau})
    if isinstance(history, SystemState):
        if history.n_bs != 2:
            raise ConfigError("the linear model has two beam splitters")
        y = np.array([history.x_m, *history.x, history.v_m, *history.v], dtype=float)
    else:
        y = np.asarray(history, dtype=float).copy()
        if y.shape != (6,):
            raise ConfigError("history must hold (x_m, x_1, x_2, v_m, v_1, v_2)")

    k_now, k_delayed = model.stiffness_matrices()
    damping = model.damping_matrix()
    buffer = _HistoryBuffer(y, dt, tau) if tau > 0.0 else None

    def rhs(time: float, state: np.ndarray) -> np.ndarray:
        x = state[:3]
        v = state[3:]
        delayed = buffer.positions(time - tau) if buffer is not None else x
        return np.concatenate([v, k_now @ x + k_delayed @ delayed - damping @ v])

    n_steps = int(round(duration / dt))
    n_records = n_steps // record_every + 1
    record = np.empty((n_records, 6))
    record[0] = y
    if buffer is not None:
        buffer.push(0, y)

    half = 0.5 * dt
    for step in range(1, n_steps + 1):
        t = (step - 1) * dt
        k1 = rhs(t, y)
        k2 = rhs(t + half, y + half * k1)
        k3 = rhs(t + half, y + half * k2)
        k4 = rhs(t + dt, y + dt * k3)
        y = y + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if buffer is not None:
            buffer.push(step, y)
        if step % record_every == 0:
            record[step // record_every] = y

    return Trajectory(
        times=np.arange(n_records) * (dt * record_every),
        x_m=record[:, 0].copy(),
        v_m=record[:, 3].copy(),
        x=record[:, 1:3].copy(),
        v=record[:, 4:6].copy(),
        step=dt,
        omega_m=model.omega_m,
        ramp=RampSchedule(),
    )
