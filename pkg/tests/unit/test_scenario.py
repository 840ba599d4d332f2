import json

import pytest
from pydantic import ValidationError

from optolattice.config_manager import SystemConfig
from optolattice.error_handling import ScenarioError
from optolattice.scenario import (
    BUILTIN_SCENARIOS,
    DEFAULT_SCENARIO,
    FIG2_GRID,
    Scenario,
    get_scenario,
    load_scenario,
)


def test_builtin_scenarios():
    for name in ("fig2", "baseline", "modes-small", "modes-large", "backaction", "delay",
                 "fixed-mirror"):
        assert name in BUILTIN_SCENARIOS
    assert get_scenario(None).name == DEFAULT_SCENARIO
    fig2 = get_scenario("fig2")
    assert fig2.n_bs_values == [1, 2, 4]
    assert len(fig2.sweep_grid) == 20
    assert fig2.sweep_grid[0] == pytest.approx(1e6)
    assert fig2.sweep_grid[-1] == pytest.approx(1e8)
    assert FIG2_GRID == sorted(FIG2_GRID)


def test_builtin_overrides_apply():
    config = SystemConfig()
    for scenario in BUILTIN_SCENARIOS.values():
        scenario.apply(config)
    assert get_scenario("modes-large").apply(config).lattice.n_bs == 10
    assert get_scenario("modes-small").apply(config).simulation.duration_s == 0.1
    assert get_scenario("baseline").apply(config).lattice.n_lat == 0.0


def test_unknown_override_is_rejected():
    with pytest.raises(ValidationError):
        Scenario(name="bad", overrides={"lattice.colour": 3})
    with pytest.raises(ValidationError):
        Scenario(name="bad", sweep_parameter="lattice.colour")
    with pytest.raises(ValidationError):
        Scenario(name="bad", n_bs_values=[0])
    with pytest.raises(ValidationError):
        Scenario(name="bad", unexpected=True)


def test_grid_must_be_monotone():
    with pytest.raises(ValidationError):
        Scenario(name="bad", sweep_grid=[1e6, 1e7, 5e6])
    Scenario(name="descending", sweep_grid=[1e7, 1e6])


def test_invalid_override_value_becomes_scenario_error():
    scenario = Scenario(name="bad", overrides={"lattice.t": 1.5})
    with pytest.raises(ScenarioError):
        scenario.apply(SystemConfig())


def test_unknown_scenario_name():
    with pytest.raises(ScenarioError):
        get_scenario("no-such-scenario")


def test_sweep_points_order():
    scenario = Scenario(name="small", sweep_grid=[3e6, 1e6, 2e6], n_bs_values=[4, 1])
    points = scenario.sweep_points(SystemConfig())
    assert [(n, v) for n, v, _ in points] == [
        (4, 1e6), (4, 2e6), (4, 3e6), (1, 1e6), (1, 2e6), (1, 3e6),
    ]
    assert points[0][2].lattice.n_bs == 4
    assert points[0][2].lattice.n_lat == 1e6


def test_grid_defaults_to_configured_value():
    scenario = Scenario(name="single")
    config = SystemConfig()
    assert scenario.grid(config) == [config.lattice.n_lat]
    assert scenario.counts(config) == [config.lattice.n_bs]
    assert scenario.output_name("sweep-atoms") == "sweep_atoms"
    named = Scenario(name="named", outputs={"steady": "geometry"})
    assert named.output_name("steady") == "geometry"


def test_scenario_from_json_file(tmp_path):
    path = tmp_path / "custom.json"
    path.write_text(json.dumps({
        "name": "custom",
        "overrides": {"lattice.power_w": 2e-3},
        "sweep_grid": [1e6, 1e7],
        "n_bs_values": [2],
    }), encoding="utf-8")
    scenario = get_scenario(str(path))
    assert scenario.name == "custom"
    assert scenario.apply(SystemConfig()).lattice.power_w == 2e-3

    broken = tmp_path / "broken.json"
    broken.write_text(json.dumps({"name": "broken", "overrides": {"nope.key": 1}}),
                      encoding="utf-8")
    with pytest.raises(ScenarioError):
        load_scenario(broken)
