"""
Nonlinear dynamics of the membrane coupled to the atomic beam splitters.

The equations of motion are integrated with a fixed-step classical Runge-Kutta
scheme compiled with numba. At every derivative evaluation the light field is
re-solved for the current positions and membrane phase, so the optical forces are
exact within the quasi-static field approximation.

State variables are displacements: the membrane from its full-power static
displacement, each beam splitter from its steady plane.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, List, Optional, Sequence, Tuple

import numpy as np
from scipy import integrate as sp_integrate
from scipy import signal, stats

from optolattice.config_manager import config_hash
from optolattice.error_handling import ConfigError, FitError, IntegrationError, SpectralError
from optolattice.physics import kernels
from optolattice.physics.params import CONSTANTS, DerivedParams
from optolattice.physics.steadystate import SteadyState, solve_steady_state
from optolattice.physics.tmm import membrane_force

if TYPE_CHECKING:
    from optolattice.config_manager import SystemConfig

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi
MIN_STEPS_PER_PERIOD = 50


@dataclass(frozen=True)
class SystemState:
    """Mechanical state of the membrane and the beam splitters."""
    x_m: float
    v_m: float
    x: np.ndarray
    v: np.ndarray

    @property
    def n_bs(self) -> int:
        return len(self.x)

    def to_vector(self) -> List[float]:
        return [float(self.x_m), float(self.v_m), *map(float, self.x), *map(float, self.v)]

    @classmethod
    def from_vector(cls, y: Sequence[float], n_bs: int) -> "SystemState":
        return cls(x_m=float(y[0]), v_m=float(y[1]),
                   x=np.array(y[2:2 + n_bs], dtype=float),
                   v=np.array(y[2 + n_bs:2 + 2 * n_bs], dtype=float))

    def is_finite(self) -> bool:
        return all(math.isfinite(value) for value in self.to_vector())


@dataclass(frozen=True)
class RampSchedule:
    """Lattice power as a fraction of P0, rising linearly over ``duration``."""
    duration: float = 0.0
    start_fraction: float = 1.0

    def fraction(self, time: float) -> float:
        if self.duration <= 0.0 or time >= self.duration:
            return 1.0
        if time <= 0.0:
            return self.start_fraction
        return self.start_fraction + (1.0 - self.start_fraction) * time / self.duration

    @property
    def end_time(self) -> float:
        return max(self.duration, 0.0)

    @classmethod
    def from_config(cls, config: "SystemConfig") -> "RampSchedule":
        sim = config.simulation
        power = config.lattice.power_w
        if not sim.ramp_enabled or sim.ramp_s <= 0.0 or power <= 0.0:
            return cls()
        return cls(duration=sim.ramp_s, start_fraction=min(sim.ramp_start_power_w / power, 1.0))


@dataclass
class Trajectory:
    """Uniformly sampled solution of the equations of motion."""
    times: np.ndarray
    x_m: np.ndarray
    v_m: np.ndarray
    x: np.ndarray
    v: np.ndarray
    step: float
    omega_m: float
    ramp: RampSchedule = field(default_factory=RampSchedule)
    config_hash: Optional[str] = None
    membrane_mass: Optional[float] = None
    well_hopping: bool = False
    hop_time: Optional[float] = None

    def __len__(self) -> int:
        return len(self.times)

    @property
    def dt(self) -> float:
        """Sampling interval."""
        if len(self.times) > 1:
            return float(self.times[1] - self.times[0])
        return self.step

    @property
    def n_bs(self) -> int:
        return self.x.shape[1]

    @property
    def period(self) -> float:
        return TWO_PI / self.omega_m

    def state(self, index: int) -> SystemState:
        return SystemState(float(self.x_m[index]), float(self.v_m[index]),
                           self.x[index].copy(), self.v[index].copy())

    @property
    def samples(self) -> List[SystemState]:
        return [self.state(i) for i in range(len(self))]


@dataclass(frozen=True)
class DampingFit:
    """Exponential fit to the mean-square membrane displacement."""
    gamma_tot: float
    window: Tuple[float, float]
    r_squared: float
    method: str
    low_confidence: bool = False
    points: int = 0


@dataclass(frozen=True)
class LimitCycleMetrics:
    saturated: bool
    ratio: Optional[float]
    onset_time: Optional[float]
    growth_rate: float
    growth_time: Optional[float] = None
    bounded: bool = False
    saturation_mean_square: Optional[float] = None


class EquationsOfMotion:
    """Right-hand side of the coupled membrane and lattice equations.

    One field solve per evaluation gives the sheet forces and the cavity input
    power. The sheets move with the dynamical trap frequency; the membrane sees the
    deviation of the cavity input from its steady value, weighted by the share of
    resonant atoms.

    The optics are evaluated at ``anharmonicity`` times the mechanical displacements
    and the optical forces are divided by it. The linear response is unchanged while
    every nonlinear length scale of the lattice stretches by 1/anharmonicity.
    """

    def __init__(self, config: "SystemConfig", derived: DerivedParams, steady: SteadyState,
                 ramp: RampSchedule):
        lattice = config.lattice
        membrane = config.membrane
        sim = config.simulation

        self.n = lattice.n_bs
        self.anharmonicity = sim.anharmonicity
        self.fixed_mirror = sim.fixed_mirror
        self.ramp = ramp
        self.steady_positions = np.asarray(steady.positions, dtype=float)
        self.zetas = np.full(self.n, derived.zeta)

        if derived.atoms_per_bs > 0.0:
            self.inv_mass = derived.stiffness_scale / (derived.atoms_per_bs * lattice.atom_mass_kg)
        else:
            self.inv_mass = 0.0

        params = np.zeros(kernels.N_PARAMS)
        params[kernels.P_PHASE] = steady.phase
        params[kernels.P_PHASE_GAIN] = 4.0 * derived.optomechanical_coupling / derived.kappa
        params[kernels.P_ETA] = membrane.eta
        params[kernels.P_TRANSMISSION] = lattice.t
        params[kernels.P_WAVENUMBER] = derived.wavenumber
        params[kernels.P_C0] = derived.c0
        params[kernels.P_SIGMA] = derived.sigma_l
        params[kernels.P_INV_MASS] = self.inv_mass
        params[kernels.P_GAMMA_A] = lattice.gamma_a_per_s
        params[kernels.P_ANHARMONICITY] = sim.anharmonicity
        params[kernels.P_GAMMA_M] = derived.gamma_m_prime
        params[kernels.P_OMEGA_M_SQ] = derived.omega_m ** 2
        params[kernels.P_X_ST] = steady.membrane_displacement
        params[kernels.P_FORCE_COEFF] = membrane_force(1.0, membrane.eta,
                                                       derived.optomechanical_coupling,
                                                       derived.omega_c, derived.kappa,
                                                       derived.sigma_l)
        params[kernels.P_DRIVE] = derived.coupling_fraction / membrane.mass_kg
        params[kernels.P_REF_FORCE] = steady.lattice_membrane_force
        params[kernels.P_RAMP_DURATION] = ramp.duration
        params[kernels.P_RAMP_START] = ramp.start_fraction
        params[kernels.P_FIXED_MIRROR] = 1.0 if sim.fixed_mirror else 0.0
        self.params = params

        self._positions = np.empty(self.n)
        self._forces = np.empty(self.n)

    @property
    def phase_gain(self) -> float:
        """dΦ/dx_m = 4G/κ."""
        return float(self.params[kernels.P_PHASE_GAIN])

    def bs_forces(self, time: float, x_m: float, xs: Sequence[float]) -> Tuple[np.ndarray, float]:
        """Optical forces on the sheets (divided by the anharmonicity) and |C_m|²."""
        a = self.anharmonicity
        phase = self.params[kernels.P_PHASE]
        if not self.fixed_mirror:
            phase += a * self.phase_gain * x_m
        positions = self.steady_positions + a * np.asarray(xs, dtype=float)
        forces = np.empty(self.n)
        amplitude = self.params[kernels.P_C0] * math.sqrt(self.ramp.fraction(time))
        scale_sq = kernels.field_forces(positions, self.zetas, phase,
                                        self.params[kernels.P_ETA],
                                        self.params[kernels.P_TRANSMISSION],
                                        self.params[kernels.P_WAVENUMBER], amplitude,
                                        self.params[kernels.P_SIGMA], forces)
        return forces / a, float(scale_sq)

    def __call__(self, time: float, y: Sequence[float]) -> np.ndarray:
        out = np.empty(2 + 2 * self.n)
        kernels.derivative(float(time), np.asarray(y, dtype=float), out, self.steady_positions,
                           self.zetas, self.params, self._positions, self._forces)
        return out


def initial_state(config: "SystemConfig", derived: DerivedParams, steady: SteadyState,
                  ramp: Optional[RampSchedule] = None) -> SystemState:
    """Membrane kicked out of its static position, atoms at rest in their wells.

    The membrane starts from the static displacement at the initial ramp power plus
    the configured kick; the beam splitters sit at the equilibrium planes for that
    membrane phase. With a fixed mirror the kick is applied to the first sheet.
    """
    sim = config.simulation
    n = config.lattice.n_bs
    ramp = ramp or RampSchedule.from_config(config)
    if sim.initial_displacement_m is not None:
        kick = sim.initial_displacement_m
    else:
        kick = sim.initial_displacement_thermal * derived.x_thermal

    if sim.fixed_mirror:
        x = np.zeros(n)
        x[0] = kick
        return SystemState(0.0, 0.0, x, np.zeros(n))

    p0 = ramp.fraction(0.0)
    x_m = -(1.0 - p0) * steady.membrane_displacement
    phase_gain = 4.0 * derived.optomechanical_coupling / derived.kappa
    shift = -phase_gain * x_m / (2.0 * derived.wavenumber)
    return SystemState(x_m + kick, 0.0, np.full(n, shift), np.zeros(n))


def integrate(config: "SystemConfig", initial: Optional[SystemState] = None,
              duration: Optional[float] = None, dt: Optional[float] = None, *,
              derived: Optional[DerivedParams] = None, steady: Optional[SteadyState] = None,
              record_every: Optional[int] = None) -> Trajectory:
    """Integrate the nonlinear equations of motion with classical RK4.

    The stepping loop runs in the compiled :func:`~optolattice.physics.kernels.rk4_run`.

    Args:
        config: System configuration.
        initial: Initial state; built by :func:`initial_state` when omitted.
        duration: Simulated time (s); ``simulation.duration_s`` by default.
        dt: Integration step (s); one ``steps_per_period``-th of the fastest period by default.
        derived: Pre-computed derived parameters.
        steady: Pre-computed full-power steady state.
        record_every: Keep every n-th step.

    Raises:
        ConfigError: If ``dt`` violates the sampling limit.
        IntegrationError: On a non-finite state, carrying the last valid state.
    """
    derived = derived or config.derived()
    steady = steady or solve_steady_state(config, derived)
    sim = config.simulation
    n = config.lattice.n_bs

    omega_max = max(derived.omega_m, derived.omega_a)
    limit = TWO_PI / (MIN_STEPS_PER_PERIOD * omega_max)
    if dt is None:
        dt = TWO_PI / (omega_max * sim.steps_per_period)
    if dt <= 0.0 or dt > limit * (1.0 + 1e-12):
        raise ConfigError(f"time step {dt:.3e} s exceeds the sampling limit {limit:.3e} s",
                          {"dt": dt, "limit": limit})
    duration = sim.duration_s if duration is None else duration
    if duration <= 0.0:
        raise ConfigError("duration must be positive", {"duration": duration})
    record_every = record_every or sim.record_every

    ramp = RampSchedule.from_config(config)
    if initial is None:
        initial = initial_state(config, derived, steady, ramp)
    if initial.n_bs != n:
        raise ConfigError(f"initial state has {initial.n_bs} beam splitters, expected {n}")

    rhs = EquationsOfMotion(config, derived, steady, ramp)
    hop_limit = config.lattice.wavelength_m / 4.0
    n_steps = int(round(duration / dt))
    n_records = n_steps // record_every + 1
    record = np.zeros((n_records, 2 + 2 * n))
    last = np.empty(2 + 2 * n)
    times = np.arange(n_records) * (dt * record_every)

    logger.info(f"Integrating {n_steps} steps of {dt:.3e} s for {n} beam splitters")
    failed_step, hop_step = kernels.rk4_run(
        np.asarray(initial.to_vector()), dt, n_steps, record_every, rhs.steady_positions,
        rhs.zetas, rhs.params, hop_limit, record, last,
    )
    if failed_step:
        t = (failed_step - 1) * dt
        raise IntegrationError(
            f"non-finite state at t = {t + dt:.6e} s",
            last_state=SystemState.from_vector(last, n),
            context={"time": t, "step": int(failed_step)},
        )

    well_hopping = hop_step >= 0
    hop_time = hop_step * dt if well_hopping else None
    if well_hopping:
        logger.warning(f"Beam splitter left its lattice well at t = {hop_time:.4e} s")

    return Trajectory(
        times=times,
        x_m=record[:, 0].copy(),
        v_m=record[:, 1].copy(),
        x=record[:, 2:2 + n].copy(),
        v=record[:, 2 + n:].copy(),
        step=dt,
        omega_m=derived.omega_m,
        ramp=ramp,
        config_hash=config_hash(config),
        membrane_mass=config.membrane.mass_kg,
        well_hopping=well_hopping,
        hop_time=hop_time,
    )


def sliding_mean_square(times: np.ndarray, values: np.ndarray,
                        window: int) -> Tuple[np.ndarray, np.ndarray]:
    """Running mean of ``values``² over ``window`` samples, at window-centre times."""
    if window < 1 or len(values) < window:
        raise FitError("trajectory shorter than the averaging window",
                       {"samples": len(values), "window": window})
    kernel = np.ones(window) / window
    mean_square = np.convolve(np.square(values), kernel, mode="valid")
    centres = 0.5 * (times[:len(mean_square)] + times[window - 1:])
    return centres, mean_square


def envelope(trajectory: Trajectory, periods: int = 3) -> Tuple[np.ndarray, np.ndarray]:
    """⟨x_m²⟩(t) averaged over ``periods`` membrane periods."""
    window = max(1, int(round(periods * trajectory.period / trajectory.dt)))
    return sliding_mean_square(trajectory.times, trajectory.x_m, window)


def extract_damping(trajectory: Trajectory, fit_window: Tuple[float, float] = (0.05, 0.3),
                    envelope_periods: int = 3, min_r_squared: float = 0.9) -> DampingFit:
    """Total membrane damping rate from the decay (or growth) of ⟨x_m²⟩.

    ``fit_window`` is measured from the end of the power ramp and clipped to the
    available envelope.

    Raises:
        FitError: For trajectories shorter than five membrane periods after the ramp,
            or windows holding fewer than three envelope points.
    """
    ramp_end = trajectory.ramp.end_time
    if len(trajectory) < 2 or trajectory.times[-1] - ramp_end < 5.0 * trajectory.period:
        raise FitError("trajectory shorter than five membrane periods after the ramp",
                       {"end": float(trajectory.times[-1]) if len(trajectory) else 0.0,
                        "ramp_end": ramp_end})

    centres, mean_square = envelope(trajectory, envelope_periods)
    start = ramp_end + fit_window[0]
    stop = min(ramp_end + fit_window[1], float(centres[-1]))
    mask = (centres >= start) & (centres <= stop) & (mean_square > 0.0)
    if np.count_nonzero(mask) < 3:
        raise FitError("fit window holds fewer than three envelope points",
                       {"window": (start, stop)})

    result = stats.linregress(centres[mask], np.log(mean_square[mask]))
    r_squared = float(result.rvalue ** 2) if math.isfinite(result.rvalue) else 0.0
    low_confidence = r_squared < min_r_squared or trajectory.well_hopping
    if low_confidence:
        logger.warning(f"Low-confidence damping fit: r² = {r_squared:.3f}, "
                       f"well hopping = {trajectory.well_hopping}")
    return DampingFit(
        gamma_tot=-float(result.slope),
        window=(float(start), float(stop)),
        r_squared=r_squared,
        method="sliding-mean-square-loglinear",
        low_confidence=low_confidence,
        points=int(np.count_nonzero(mask)),
    )


def thermal_mean_square(membrane_mass: float, omega_m: float, temperature: float = 300.0) -> float:
    """Thermal variance k_BT/(MΩ_m²)."""
    return CONSTANTS.boltzmann * temperature / (membrane_mass * omega_m ** 2)


def limit_cycle_metrics(trajectory: Trajectory, thermal_ref: Optional[float] = None,
                        temperature: float = 300.0, envelope_periods: int = 3,
                        min_growth: float = 10.0) -> LimitCycleMetrics:
    """Detect saturation of an unstable trajectory into a limit cycle.

    The envelope is sampled once per membrane period after the ramp, its logarithmic
    slope is estimated with a Savitzky-Golay derivative, and saturation is declared
    where the slope falls below 1% of its peak after the envelope has grown by at
    least ``min_growth``.
    """
    if thermal_ref is None:
        if trajectory.membrane_mass is None:
            raise FitError("thermal reference needs the membrane mass")
        thermal_ref = thermal_mean_square(trajectory.membrane_mass, trajectory.omega_m,
                                          temperature)

    centres, mean_square = envelope(trajectory, envelope_periods)
    stride = max(1, int(round(trajectory.period / trajectory.dt)))
    keep = centres >= trajectory.ramp.end_time
    times = centres[keep][::stride]
    values = mean_square[keep][::stride]
    not_saturated = LimitCycleMetrics(saturated=False, ratio=None, onset_time=None,
                                      growth_rate=0.0)
    if len(values) < 7 or np.any(values <= 0.0):
        return not_saturated

    window = min(21, len(values) if len(values) % 2 else len(values) - 1)
    slope = signal.savgol_filter(np.log(values), window_length=window, polyorder=2, deriv=1,
                                 delta=float(times[1] - times[0]))
    peak_index = int(np.argmax(slope))
    peak = float(slope[peak_index])
    if peak <= 0.0:
        return LimitCycleMetrics(saturated=False, ratio=None, onset_time=None, growth_rate=peak)

    flat = np.nonzero(slope[peak_index:] < 0.01 * peak)[0]
    before = np.nonzero(slope[:peak_index] < 0.1 * peak)[0]
    start = int(before[-1]) if before.size else 0
    if flat.size == 0:
        return LimitCycleMetrics(saturated=False, ratio=None, onset_time=None, growth_rate=peak)
    onset = peak_index + int(flat[0])
    if values[onset] < min_growth * values[start]:
        return LimitCycleMetrics(saturated=False, ratio=None, onset_time=None, growth_rate=peak)

    saturated_values = values[onset:]
    mean_saturated = float(np.mean(saturated_values))
    growth_time = float(times[onset] - times[start])
    bounded = (float(times[-1] - times[onset]) >= 2.0 * growth_time
               and float(np.max(saturated_values)) <= 2.0 * float(values[onset]))
    return LimitCycleMetrics(
        saturated=True,
        ratio=mean_saturated / thermal_ref,
        onset_time=float(times[onset]),
        growth_rate=peak,
        growth_time=growth_time,
        bounded=bounded,
        saturation_mean_square=mean_saturated,
    )


def mode_phase_profile(trajectory: Trajectory, segment: Optional[Tuple[float, float]] = None,
                       min_peak_ratio: float = 10.0) -> np.ndarray:
    """Phase lag of each beam splitter behind the first at the dominant frequency.

    Positive lags mean the sheet oscillates later than the first one. The segment
    defaults to the second half of the trajectory.

    Raises:
        SpectralError: If no spectral line stands out of the segment's spectrum.
    """
    n = trajectory.n_bs
    if n == 1:
        return np.zeros(1)
    if segment is None:
        mask = np.arange(len(trajectory)) >= len(trajectory) // 2
    else:
        mask = (trajectory.times >= segment[0]) & (trajectory.times <= segment[1])
    data = trajectory.x[mask]
    if data.shape[0] < 8:
        raise SpectralError("segment too short for spectral analysis", {"samples": data.shape[0]})

    data = data - data.mean(axis=0)
    window = np.hanning(data.shape[0])
    spectra = np.fft.rfft(data * window[:, None], axis=0)
    power = np.sum(np.abs(spectra) ** 2, axis=1)[1:]
    peak = int(np.argmax(power))
    background = float(np.median(power))
    if background > 0.0 and power[peak] / background < min_peak_ratio:
        raise SpectralError("no dominant spectral peak",
                            {"peak_to_median": float(power[peak] / background)})
    if power[peak] == 0.0:
        raise SpectralError("segment carries no oscillation")

    line = spectra[peak + 1]
    relative = np.angle(line * np.conj(line[0]))
    return -np.unwrap(relative)


def lattice_energy(trajectory: Trajectory, config: "SystemConfig",
                   derived: Optional[DerivedParams] = None, steady: Optional[SteadyState] = None,
                   indices: Optional[Sequence[int]] = None) -> np.ndarray:
    """Specific mechanical energy (J/kg per sheet) of the beam splitter array.

    Kinetic energy plus the optical potential, obtained by integrating the force
    along the straight path from the steady planes. The membrane phase is held at
    its steady value, so this is a conserved quantity only for a frozen membrane
    and a single sheet.
    """
    derived = derived or config.derived()
    steady = steady or solve_steady_state(config, derived)
    rhs = EquationsOfMotion(config, derived, steady, trajectory.ramp)
    indices = range(len(trajectory)) if indices is None else indices

    energies = []
    for i in indices:
        time = float(trajectory.times[i])
        x = trajectory.x[i]

        def work(s: float) -> float:
            forces, _ = rhs.bs_forces(time, 0.0, [s * xi for xi in x])
            return float(np.dot(forces, x))

        potential, _ = sp_integrate.quad(work, 0.0, 1.0, epsabs=0.0, epsrel=1e-12, limit=100)
        kinetic = 0.5 * float(np.dot(trajectory.v[i], trajectory.v[i]))
        energies.append(kinetic - rhs.inv_mass * potential)
    return np.asarray(energies)
