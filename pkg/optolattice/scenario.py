"""
Named scenarios: configuration overrides plus an optional sweep axis.

A scenario is applied on top of the loaded configuration. Built-in scenarios
reproduce the standard studies; custom ones are read from JSON files.
"""

import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from optolattice.config_manager import SystemConfig, is_known_key
from optolattice.error_handling import ConfigError, ScenarioError

logger = logging.getLogger(__name__)

DEFAULT_SCENARIO = "fig2"


class Scenario(BaseModel):
    """Overrides and sweep axis of one study."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    name: str
    description: str = ""
    overrides: Dict[str, Any] = Field(default_factory=dict)
    sweep_parameter: str = "lattice.n_lat"
    sweep_grid: List[float] = Field(default_factory=list)
    n_bs_values: List[int] = Field(default_factory=list)
    outputs: Dict[str, str] = Field(default_factory=dict)

    @field_validator("overrides")
    @classmethod
    def _known_overrides(cls, value: Dict[str, Any]) -> Dict[str, Any]:
        unknown = sorted(key for key in value if not is_known_key(key))
        if unknown:
            raise ValueError(f"unknown configuration keys: {', '.join(unknown)}")
        return value

    @field_validator("n_bs_values")
    @classmethod
    def _positive_counts(cls, value: List[int]) -> List[int]:
        if any(n < 1 for n in value):
            raise ValueError("beam splitter counts must be positive")
        return value

    @model_validator(mode="after")
    def _valid_axis(self) -> "Scenario":
        if not is_known_key(self.sweep_parameter):
            raise ValueError(f"unknown sweep parameter {self.sweep_parameter}")
        grid = np.asarray(self.sweep_grid, dtype=float)
        if grid.size > 1:
            steps = np.diff(grid)
            if not (np.all(steps > 0) or np.all(steps < 0)):
                raise ValueError("sweep grid must be strictly monotone")
        return self

    def apply(self, config: SystemConfig) -> SystemConfig:
        """Configuration with this scenario's overrides."""
        try:
            return config.with_overrides(self.overrides)
        except ConfigError as e:
            raise ScenarioError(f"scenario {self.name}: {e}",
                                {"scenario": self.name, **e.context}) from e

    def grid(self, config: SystemConfig) -> List[float]:
        """Sweep values, or the configured value alone when no grid is set."""
        if self.sweep_grid:
            return list(self.sweep_grid)
        section, _, key = self.sweep_parameter.partition(".")
        return [float(getattr(getattr(config, section), key))]

    def counts(self, config: SystemConfig) -> List[int]:
        return list(self.n_bs_values) or [config.lattice.n_bs]

    def sweep_points(self, config: SystemConfig) -> List[Tuple[int, float, SystemConfig]]:
        """All (n_bs, value, config) combinations, ordered by count then axis value.

        ``config`` is expected to carry this scenario's overrides already.
        """
        points = []
        for n_bs in self.counts(config):
            for value in sorted(self.grid(config)):
                try:
                    point = config.with_overrides({"lattice.n_bs": n_bs,
                                                   self.sweep_parameter: value})
                except ConfigError as e:
                    raise ScenarioError(f"scenario {self.name}: {e}",
                                        {"scenario": self.name, "value": value,
                                         **e.context}) from e
                points.append((n_bs, value, point))
        return points

    def output_name(self, command: str) -> str:
        return self.outputs.get(command, command.replace("-", "_"))


def _log_grid(start: float, stop: float, points: int) -> List[float]:
    return [float(v) for v in np.geomspace(start, stop, points)]


FIG2_GRID = _log_grid(1e6, 1e8, 20)

BUILTIN_SCENARIOS: Dict[str, Scenario] = {
    scenario.name: scenario
    for scenario in (
        Scenario(
            name="fig2",
            description="Membrane damping versus lattice atom number for 1, 2 and 4 sheets",
            sweep_grid=FIG2_GRID,
            n_bs_values=[1, 2, 4],
        ),
        Scenario(
            name="baseline",
            description="Empty lattice: membrane damping alone",
            overrides={"lattice.n_lat": 0.0},
        ),
        Scenario(
            name="fig2-one-bs",
            description="Single-sheet atom-number sweep",
            sweep_grid=FIG2_GRID,
            n_bs_values=[1],
        ),
        Scenario(
            name="fig2-four-bs",
            description="Four-sheet sweep next to the two-sheet reference",
            sweep_grid=FIG2_GRID,
            n_bs_values=[2, 4],
        ),
        Scenario(
            name="modes-small",
            description="Ten sheets below the instability threshold",
            overrides={"lattice.n_lat": 3.0e6, "lattice.n_bs": 10,
                       "simulation.duration_s": 0.1, "simulation.fit_stop_s": 0.09},
        ),
        Scenario(
            name="modes-large",
            description="Ten sheets above the instability threshold",
            overrides={"lattice.n_lat": 8.0e7, "lattice.n_bs": 10,
                       "simulation.duration_s": 0.3, "simulation.fit_stop_s": 0.29},
        ),
        Scenario(
            name="backaction",
            description="Back-action transfer functions of one and two sheets",
        ),
        Scenario(
            name="delay",
            description="Atom-number sweep with retarded atom-membrane coupling",
            overrides={"delay.enabled": True},
            sweep_grid=FIG2_GRID,
            n_bs_values=[2],
        ),
        Scenario(
            name="fixed-mirror",
            description="Lattice in front of a fixed mirror",
            overrides={"simulation.fixed_mirror": True},
        ),
    )
}


def get_scenario(name: Optional[str]) -> Scenario:
    """Built-in scenario by name, or a scenario read from a JSON file path.

    Raises:
        ScenarioError: For unknown names and invalid scenario files.
    """
    name = name or DEFAULT_SCENARIO
    if name in BUILTIN_SCENARIOS:
        return BUILTIN_SCENARIOS[name]
    path = Path(name)
    if path.suffix == ".json" and path.exists():
        return load_scenario(path)
    raise ScenarioError(f"unknown scenario {name!r}",
                        {"available": sorted(BUILTIN_SCENARIOS)})


def load_scenario(path: Union[str, Path]) -> Scenario:
    path = Path(path)
    try:
        scenario = Scenario.model_validate_json(path.read_text(encoding="utf-8"))
    except ValidationError as e:
        raise ScenarioError(f"invalid scenario file {path}",
                            {"errors": [err["msg"] for err in e.errors()]}) from e
    logger.info(f"Loaded scenario {scenario.name} from {path}")
    return scenario
