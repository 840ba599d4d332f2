"""
Parallel evaluation of sweep points.

Point functions are module-level so they can be shipped to worker processes.
Results come back in the order of the submitted points, whatever order the
workers finish in.
"""

import logging
import os
from concurrent.futures import ProcessPoolExecutor, as_completed
from typing import Any, Callable, Dict, List, Optional, Sequence

from optolattice.config_manager import SystemConfig, config_hash
from optolattice.error_handling import ErrorHandler, ErrorSeverity, OptolatticeError
from optolattice.physics.dynamics import extract_damping, integrate
from optolattice.physics.linear import delay_eigenvalues, linear_model_for, stability_eigenvalues

logger = logging.getLogger(__name__)

PointFunction = Callable[[SystemConfig], Dict[str, Any]]


def _failed(config: SystemConfig, error: OptolatticeError) -> Dict[str, Any]:
    return {
        "gamma_tot": float("nan"),
        "flag": type(error).__name__,
        "error": ErrorHandler.to_record(error),
        "exception": error,
        "config_hash": config_hash(config),
    }


def nonlinear_point(config: SystemConfig) -> Dict[str, Any]:
    """Γ_tot from a full nonlinear trajectory."""
    try:
        trajectory = integrate(config)
        fit = extract_damping(
            trajectory,
            fit_window=(config.simulation.fit_start_s, config.simulation.fit_stop_s),
            envelope_periods=config.simulation.envelope_periods,
        )
    except OptolatticeError as e:
        return _failed(config, e)
    flag = ""
    if trajectory.well_hopping:
        flag = "well-hopping"
    elif fit.low_confidence:
        flag = "low-confidence"
    return {
        "gamma_tot": fit.gamma_tot,
        "r_squared": fit.r_squared,
        "flag": flag,
        "config_hash": config_hash(config),
    }


def linear_point(config: SystemConfig) -> Dict[str, Any]:
    """Γ_tot of the membrane-like eigenmode, with and without the configured delay."""
    try:
        model = linear_model_for(config, tau=0.0)
        result = stability_eigenvalues(model)
        gamma_delayed = float("nan")
        if config.delay.enabled and config.delay.tau_s > 0.0:
            gamma_delayed = delay_eigenvalues(model, tau=config.delay.tau_s).gamma_tot
    except OptolatticeError as e:
        return _failed(config, e)
    return {
        "gamma_tot": result.gamma_tot,
        "gamma_tot_delayed": gamma_delayed,
        "frequency": result.frequency,
        "membrane_weight": result.membrane_weight,
        "flag": "",
        "config_hash": config_hash(config),
    }


def _default_workers() -> int:
    return os.cpu_count() or 1


def run_sweep(point: PointFunction, configs: Sequence[SystemConfig],
              workers: Optional[int] = None,
              labels: Optional[Sequence[str]] = None,
              errors: Optional[ErrorHandler] = None) -> List[Dict[str, Any]]:
    """Evaluate ``point`` for every configuration.

    ``workers=1`` evaluates in-process. Every finished point is logged on one line.
    Failed points keep their error record; the exception itself goes to ``errors``.
    """
    workers = workers or _default_workers()
    labels = list(labels) if labels is not None else [f"point {i}" for i in range(len(configs))]
    results: List[Optional[Dict[str, Any]]] = [None] * len(configs)
    total = len(configs)

    def report(index: int, done: int) -> None:
        result = results[index]
        error = result.pop("exception", None)
        if error is not None and errors is not None:
            errors.log_error(error, {"point": labels[index]}, ErrorSeverity.MEDIUM)
        logger.info(f"[{done}/{total}] {labels[index]}: "
                    f"Γ_tot = {result['gamma_tot']:.6g} s⁻¹ {result.get('flag', '')}".rstrip())

    if workers == 1 or total <= 1:
        for i, config in enumerate(configs):
            results[i] = point(config)
            report(i, i + 1)
    else:
        with ProcessPoolExecutor(max_workers=min(workers, total)) as executor:
            futures = {executor.submit(point, config): i for i, config in enumerate(configs)}
            for done, future in enumerate(as_completed(futures), start=1):
                index = futures[future]
                results[index] = future.result()
                report(index, done)
    return [result for result in results if result is not None]
