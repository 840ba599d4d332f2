"""
Command-line interface for the optolattice toolkit.
"""

import functools
import json
import logging
import math
import uuid
from dataclasses import asdict, dataclass
from datetime import datetime
from typing import Any, Callable, Dict, List, Optional, Tuple

import click
import numpy as np
from rich.console import Console
from rich.table import Table

from optolattice import __version__
from optolattice.config_manager import SystemConfig, config_from_env, config_hash, load_config
from optolattice.error_handling import (
    ConfigError,
    ErrorHandler,
    ErrorSeverity,
    OptolatticeError,
    ScenarioError,
    setup_logging,
)
from optolattice.physics.backaction import (
    backaction_params_from_config,
    calibration_chain_from_config,
    electrical_calibration,
    max_phase_delay,
    sweep_tf,
)
from optolattice.physics.dynamics import (
    envelope,
    extract_damping,
    integrate,
    limit_cycle_metrics,
    mode_phase_profile,
)
from optolattice.physics.linear import instability_threshold
from optolattice.physics.params import CONSTANTS
from optolattice.physics.steadystate import solve_steady_state
from optolattice.runs.run_manager import ResultTable, RunManager
from optolattice.scenario import Scenario, get_scenario
from optolattice.sweeps import linear_point, nonlinear_point, run_sweep

logger = logging.getLogger(__name__)


class CommandFailed(click.ClickException):
    """Failure reported as a JSON error record on stderr."""

    def __init__(self, record: Dict[str, Any], exit_code: int):
        super().__init__(record["message"])
        self.record = record
        self.exit_code = exit_code

    def show(self, file=None) -> None:
        click.echo(json.dumps(self.record, sort_keys=True), err=True)


@dataclass(frozen=True)
class RunOptions:
    config_path: Optional[str]
    scenario: Optional[str]
    out: str
    workers: Optional[int]
    seedless: bool
    overrides: Tuple[str, ...]
    log_level: Optional[str]


@dataclass
class RunContext:
    """Everything a subcommand needs once the configuration is settled."""
    name: str
    config: SystemConfig
    scenario: Scenario
    options: RunOptions
    runs: RunManager
    run_id: str
    errors: ErrorHandler

    @property
    def hash(self) -> str:
        return config_hash(self.config)

    def table(self, columns: List[Tuple[str, str]]) -> ResultTable:
        return ResultTable(columns=columns, config_hash=self.hash)

    def emit(self, table: ResultTable, summary: Dict[str, Any]) -> None:
        """Write the CSV table and its JSON summary into the run directory."""
        name = self.scenario.output_name(self.name)
        self.runs.save_table(self.run_id, name, table)
        self.runs.save_artifact(self.run_id, f"{name}_summary",
                                {"command": self.name, "scenario": self.scenario.name,
                                 **summary, "errors": error_counts(self.errors),
                                 "table": table.to_summary()})


def error_counts(errors: ErrorHandler) -> Dict[str, Any]:
    summary = errors.get_error_summary()
    return {"counts": summary["error_counts"], "total": summary["total_errors"]}


def _parse_overrides(pairs: Tuple[str, ...]) -> Dict[str, str]:
    overrides = {}
    for pair in pairs:
        key, sep, value = pair.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"expected KEY=VALUE, got {pair!r}", {"override": pair})
        overrides[key.strip()] = value.strip()
    return overrides


def load_run_config(options: RunOptions) -> Tuple[SystemConfig, Scenario]:
    """Defaults or file, then environment, then scenario, then ``--set`` overrides."""
    base = load_config(options.config_path) if options.config_path else SystemConfig()
    config = config_from_env(base)
    scenario = get_scenario(options.scenario)
    config = scenario.apply(config)
    return config.with_overrides(_parse_overrides(options.overrides)), scenario


def common_options(func: Callable) -> Callable:
    """Shared options of every subcommand."""
    @click.option("--config", "config_path", type=click.Path(dir_okay=False),
                  help="Configuration file (section.key = value)")
    @click.option("--scenario", default=None, help="Built-in scenario name or scenario JSON file")
    @click.option("--out", default="runs", show_default=True, help="Output directory")
    @click.option("--workers", type=click.IntRange(min=1), default=None,
                  help="Worker processes for sweeps (default: all cores)")
    @click.option("--seedless", is_flag=True,
                  help="Assert a random-free run; all computations are deterministic")
    @click.option("--set", "overrides", multiple=True, metavar="KEY=VALUE",
                  help="Override a configuration key (repeatable)")
    @click.option("--log-level", default=None, help="Logging level")
    @functools.wraps(func)
    def wrapper(config_path, scenario, out, workers, seedless, overrides, log_level, **kwargs):
        options = RunOptions(config_path, scenario, out, workers, seedless, overrides, log_level)
        return func(options, **kwargs)
    return wrapper


def execute(name: str, options: RunOptions, body: Callable[[RunContext], None]) -> None:
    """Run ``body`` inside a run directory, turning failures into exit codes.

    Configuration and scenario errors exit with status 2, computation errors with 1.
    """
    runs: Optional[RunManager] = None
    run_id: Optional[str] = None
    errors: Optional[ErrorHandler] = None
    try:
        config, scenario = load_run_config(options)
        errors = setup_logging(options.log_level or config.logging.level, config.logging.file_path,
                      config.logging.rich)
        for issue in config.validate():
            logger.warning(issue)

        runs = RunManager(options.out)
        run_id = f"{name}-{datetime.now():%Y%m%d-%H%M%S}-{uuid.uuid4().hex[:6]}"
        runs.start_run(run_id, {
            "command": name,
            "scenario": scenario.name,
            "config_hash": config_hash(config),
            "version": __version__,
            "seedless": options.seedless,
        })
        body(RunContext(name, config, scenario, options, runs, run_id, errors))
        runs.end_run(details={"error_summary": error_counts(errors)})
    except OptolatticeError as e:
        exit_code = 2 if isinstance(e, (ConfigError, ScenarioError)) else 1
        record = ErrorHandler.to_record(e, {"command": name, "scenario": options.scenario})
        if errors is not None:
            errors.log_error(e, {"command": name}, ErrorSeverity.HIGH)
        else:
            logger.error(f"Error in {name}: {e}")
        if runs is not None and run_id is not None:
            runs.save_error(run_id, e, {"command": name, "fatal": True})
            runs.update_run_status(run_id, "failed", {"end_time": datetime.now().isoformat(),
                                                      "error": str(e)})
        raise CommandFailed(record, exit_code)


def show_table(title: str, rows: List[Tuple[str, Any]]) -> None:
    table = Table(title=title)
    table.add_column("Quantity", style="cyan")
    table.add_column("Value", style="green")
    for label, value in rows:
        if isinstance(value, float):
            value = f"{value:.6g}"
        table.add_row(label, str(value))
    Console().print(table)


@click.group()
@click.version_option(__version__, prog_name="optolattice")
def cli():
    """optolattice - atoms in an optical lattice coupled to a membrane"""
    pass


@cli.command()
@common_options
def simulate(options: RunOptions):
    """Integrate one trajectory and fit the membrane damping."""
    def body(ctx: RunContext) -> None:
        config = ctx.config
        derived = config.derived()
        trajectory = integrate(config, derived=derived)
        sim = config.simulation
        fit = extract_damping(trajectory, fit_window=(sim.fit_start_s, sim.fit_stop_s),
                              envelope_periods=sim.envelope_periods)
        cycle = limit_cycle_metrics(trajectory, temperature=sim.temperature_k,
                                    envelope_periods=sim.envelope_periods)

        centres, mean_square = envelope(trajectory, sim.envelope_periods)
        stride = max(1, int(round(trajectory.period / trajectory.dt)))
        table = ctx.table([("time", "s"), ("mean_square_x_m", "m^2")])
        for time, value in zip(centres[::stride], mean_square[::stride]):
            table.add_row(float(time), float(value))

        gamma_m = config.membrane.gamma_m_per_s
        gamma_opt = config.membrane.gamma_opt_per_s
        ctx.emit(table, {
            "fit": asdict(fit),
            "limit_cycle": asdict(cycle),
            "well_hopping": trajectory.well_hopping,
            "hop_time": trajectory.hop_time,
            "decomposition": {
                "gamma_m": gamma_m,
                "gamma_opt": gamma_opt,
                "gamma_sym": derived.gamma_sym,
                "gamma_sym_effective": derived.gamma_sym_effective,
                "gamma_tot_predicted": gamma_m + gamma_opt + derived.gamma_sym,
                "gamma_tot_predicted_effective": gamma_m + gamma_opt + derived.gamma_sym_effective,
            },
        })
        show_table(f"simulate ({ctx.scenario.name})", [
            ("Γ_tot fit [1/s]", fit.gamma_tot),
            ("r²", fit.r_squared),
            ("Γ_m + Γ_opt [1/s]", gamma_m + gamma_opt),
            ("Γ_sym [1/s]", derived.gamma_sym_effective),
            ("limit cycle", cycle.saturated),
            ("run", ctx.run_id),
        ])

    execute("simulate", options, body)


@cli.command("sweep-atoms")
@common_options
def sweep_atoms(options: RunOptions):
    """Nonlinear Γ_tot along the scenario's sweep axis for each beam splitter count."""
    def body(ctx: RunContext) -> None:
        points = ctx.scenario.sweep_points(ctx.config)
        labels = [f"n_bs={n} {ctx.scenario.sweep_parameter}={value:.6g}"
                  for n, value, _ in points]
        results = run_sweep(nonlinear_point, [cfg for _, _, cfg in points],
                            ctx.options.workers, labels, ctx.errors)

        table = ctx.table([("n_bs", "1"), ("value", ctx.scenario.sweep_parameter),
                           ("gamma_tot", "1/s"), ("r_squared", "1"), ("flag", "-")])
        for (n_bs, value, _), result in zip(points, results):
            table.add_row(n_bs, value, result["gamma_tot"], result.get("r_squared", math.nan),
                          result["flag"], config_hash=result["config_hash"])

        unstable = {}
        for (n_bs, value, _), result in zip(points, results):
            if result["gamma_tot"] < 0.0 and n_bs not in unstable:
                unstable[n_bs] = value
        ctx.emit(table, {"first_unstable": {str(n): unstable.get(n)
                                            for n in ctx.scenario.counts(ctx.config)}})
        show_table(f"sweep-atoms ({ctx.scenario.name})", [
            ("points", len(points)),
            *[(f"first unstable, n_bs={n}", unstable.get(n, "none"))
              for n in ctx.scenario.counts(ctx.config)],
            ("run", ctx.run_id),
        ])

    execute("sweep-atoms", options, body)


@cli.command()
@common_options
def stability(options: RunOptions):
    """Linear-model Γ_tot along the sweep axis and the instability threshold."""
    def body(ctx: RunContext) -> None:
        scenario = ctx.scenario
        values = sorted(scenario.grid(ctx.config))
        configs = [ctx.config.with_overrides({scenario.sweep_parameter: value, "lattice.n_bs": 2})
                   for value in values]
        labels = [f"{scenario.sweep_parameter}={value:.6g}" for value in values]
        results = run_sweep(linear_point, configs, ctx.options.workers, labels, ctx.errors)

        table = ctx.table([("value", scenario.sweep_parameter), ("gamma_tot", "1/s"),
                           ("gamma_tot_delayed", "1/s"), ("frequency", "rad/s"),
                           ("membrane_weight", "1"), ("flag", "-")])
        for value, result in zip(values, results):
            table.add_row(value, result["gamma_tot"], result.get("gamma_tot_delayed", math.nan),
                          result.get("frequency", math.nan),
                          result.get("membrane_weight", math.nan), result["flag"],
                          config_hash=result["config_hash"])

        tau = ctx.config.delay.tau_s
        threshold = instability_threshold(ctx.config, tau=0.0)
        threshold_delayed = instability_threshold(ctx.config, tau=tau) if tau > 0.0 else threshold
        shift = None
        if threshold is not None and threshold_delayed is not None:
            shift = (threshold_delayed - threshold) / threshold
        ctx.emit(table, {"threshold": {"tau": 0.0, "n_lat": threshold},
                         "threshold_delayed": {"tau": tau, "n_lat": threshold_delayed},
                         "relative_shift": shift})
        show_table(f"stability ({scenario.name})", [
            ("threshold N_lat", threshold if threshold is not None else "none"),
            (f"threshold N_lat, τ = {tau:.3g} s",
             threshold_delayed if threshold_delayed is not None else "none"),
            ("run", ctx.run_id),
        ])

    execute("stability", options, body)


@cli.command()
@common_options
def backaction(options: RunOptions):
    """Back-action transfer functions of one and two beam splitters."""
    def body(ctx: RunContext) -> None:
        ba = ctx.config.backaction
        params = backaction_params_from_config(ctx.config)
        chain = calibration_chain_from_config(ctx.config)
        offset = ba.offset_db if ba.apply_offset else None
        omega_min = 2.0 * math.pi * ba.freq_min_hz
        omega_max = 2.0 * math.pi * ba.freq_max_hz

        table = ctx.table([("omega_hz", "Hz"), ("re_response", "W/rad"),
                           ("im_response", "W/rad"), ("amplitude_dbm", "dBm"),
                           ("phase_deg", "deg"), ("model", "-"), ("delay_deg", "deg"),
                           ("flagged", "-")])
        delays = {}
        for model in ("one", "two"):
            points = sweep_tf(model, omega_min, omega_max, ba.points, params, ba.grid)
            for point in points:
                power = (electrical_calibration(point.response, chain, offset)
                         if not point.flagged else math.nan)
                table.add_row(point.omega / (2.0 * math.pi), point.response.real,
                              point.response.imag, power, point.phase_deg, model,
                              point.delay_deg, point.flagged)
            delays[model] = max_phase_delay(points)

        ctx.emit(table, {
            "nu": params.nu,
            "max_delay_deg": delays,
            "exceeds_half_cycle": {model: bool(delay > 180.0) for model, delay in delays.items()},
            "offset_db": offset,
        })
        show_table(f"backaction ({ctx.scenario.name})", [
            ("ν", params.nu),
            ("max delay, one sheet [deg]", delays["one"]),
            ("max delay, two sheets [deg]", delays["two"]),
            ("run", ctx.run_id),
        ])

    execute("backaction", options, body)


@cli.command()
@common_options
@click.option("--segment", nargs=2, type=float, default=None,
              help="Analysis window START STOP in seconds (default: second half)")
def modes(options: RunOptions, segment: Optional[Tuple[float, float]]):
    """Phase profile of the beam splitter array at the dominant frequency."""
    def body(ctx: RunContext) -> None:
        trajectory = integrate(ctx.config)
        lags = np.degrees(mode_phase_profile(trajectory, segment))

        table = ctx.table([("bs_index", "1"), ("phase_lag", "deg")])
        for index, lag in enumerate(lags):
            table.add_row(index, float(lag))

        steps = np.diff(lags)
        monotonic = bool(np.all(steps >= 0.0) or np.all(steps <= 0.0))
        accumulated = float(lags[-1] - lags[0])
        ctx.emit(table, {
            "accumulated_lag_deg": accumulated,
            "max_abs_lag_deg": float(np.max(np.abs(lags))),
            "monotonic": monotonic,
            "well_hopping": trajectory.well_hopping,
        })
        show_table(f"modes ({ctx.scenario.name})", [
            ("beam splitters", len(lags)),
            ("accumulated lag [deg]", accumulated),
            ("monotonic", monotonic),
            ("run", ctx.run_id),
        ])

    execute("modes", options, body)


@cli.command()
@common_options
def steady(options: RunOptions):
    """Steady-state geometry of the lattice and the membrane."""
    def body(ctx: RunContext) -> None:
        derived = ctx.config.derived()
        state = solve_steady_state(ctx.config, derived)
        force_scale = CONSTANTS.vacuum_permittivity * derived.sigma_l * abs(derived.c0) ** 2

        table = ctx.table([("bs_index", "1"), ("position", "m"), ("residual_force", "N"),
                           ("stiffness", "N/m")])
        for index, (z, force, k) in enumerate(zip(state.positions, state.residual_forces,
                                                  state.stiffness)):
            table.add_row(index, float(z), float(force), float(k) * force_scale)

        ctx.emit(table, {
            "membrane_displacement": state.membrane_displacement,
            "phase": state.phase,
            "lattice_constant": state.lattice_constant,
            "input_power": state.input_power,
            "derived": {
                "zeta": derived.zeta,
                "reflectivity": derived.reflectivity,
                "asymmetry": derived.asymmetry,
                "nu": derived.nu,
                "n_resonant": derived.n_resonant,
                "omega_a": derived.omega_a,
                "gamma_sym": derived.gamma_sym,
                "gamma_sym_effective": derived.gamma_sym_effective,
            },
        })
        show_table(f"steady ({ctx.scenario.name})", [
            ("x_m [m]", state.membrane_displacement),
            ("Φ [rad]", state.phase),
            ("d [m]", state.lattice_constant),
            ("ζ", derived.zeta),
            ("run", ctx.run_id),
        ])

    execute("steady", options, body)


@cli.group("runs")
def runs_group():
    """Inspect and remove run directories."""
    pass


def _run_manager(out: str, run_id: str) -> RunManager:
    manager = RunManager(out)
    if manager.get_run_metadata(run_id) is None:
        raise click.ClickException(f"run {run_id} not found in {out}")
    return manager


@runs_group.command("list")
@click.option("--out", default="runs", show_default=True, help="Output directory")
def list_runs(out: str):
    """List runs, newest first."""
    entries = RunManager(out).list_runs()
    if not entries:
        click.echo("No runs found.")
        return
    table = Table(title=f"runs ({out})")
    for column in ("run", "command", "scenario", "status", "started"):
        table.add_column(column)
    for entry in entries:
        table.add_row(entry["run_id"], str(entry.get("command", "")),
                      str(entry.get("scenario", "")), entry.get("status", ""),
                      entry.get("start_time", ""))
    Console().print(table)


@runs_group.command()
@click.argument("run_id")
@click.option("--out", default="runs", show_default=True, help="Output directory")
@click.option("--artifact", default=None, help="Print this JSON artifact instead of the metadata")
def show(run_id: str, out: str, artifact: Optional[str]):
    """Print the metadata or one artifact of a run as JSON."""
    manager = _run_manager(out, run_id)
    if artifact is None:
        data = manager.get_run_metadata(run_id)
    else:
        data = manager.load_artifact(run_id, artifact)
        if data is None:
            raise click.ClickException(f"run {run_id} has no artifact {artifact}")
    click.echo(json.dumps(data, indent=2, sort_keys=True))


@runs_group.command()
@click.argument("run_id")
@click.option("--out", default="runs", show_default=True, help="Output directory")
@click.confirmation_option(prompt="Delete this run?")
def delete(run_id: str, out: str):
    """Remove a run directory and its index entry."""
    _run_manager(out, run_id).delete_run(run_id)
    click.echo(f"Deleted {run_id}")


if __name__ == "__main__":
    cli()
