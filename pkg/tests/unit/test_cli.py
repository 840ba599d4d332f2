import json

import pytest
from click.testing import CliRunner

from optolattice.cli import cli

BASELINE_GAMMA = 0.96 + 10.6


def _invoke(tmp_path, *args):
    runner = CliRunner()
    return runner.invoke(cli, [*args, "--out", str(tmp_path / "runs"), "--log-level", "WARNING"])


def _single(tmp_path, pattern):
    matches = sorted((tmp_path / "runs").glob(pattern))
    assert len(matches) == 1, matches
    return matches[0]


def _data_lines(path):
    return [line for line in path.read_text(encoding="utf-8").splitlines()
            if not line.startswith("#")]


def test_version():
    result = CliRunner().invoke(cli, ["--version"])
    assert result.exit_code == 0
    assert "optolattice" in result.output


def test_steady_writes_one_row_per_sheet(tmp_path):
    result = _invoke(tmp_path, "steady", "--set", "lattice.n_bs=3")
    assert result.exit_code == 0, result.output
    lines = _data_lines(_single(tmp_path, "steady-*/steady.csv"))
    assert lines[0] == "bs_index,position,residual_force,stiffness,config_hash"
    assert len(lines) == 4

    metadata = json.loads(_single(tmp_path, "steady-*/metadata.json").read_text())
    assert metadata["status"] == "completed"
    assert metadata["command"] == "steady"


def test_backaction_summary(tmp_path):
    result = _invoke(tmp_path, "backaction", "--scenario", "backaction")
    assert result.exit_code == 0, result.output
    summary = json.loads(
        _single(tmp_path, "backaction-*/artifacts/backaction_summary.json").read_text())
    assert summary["nu"] == pytest.approx(0.2249, rel=1e-2)
    assert summary["max_delay_deg"]["two"] > 180.0
    assert summary["exceeds_half_cycle"] == {"one": False, "two": True}
    assert summary["errors"] == {"counts": {}, "total": 0}
    lines = _data_lines(_single(tmp_path, "backaction-*/backaction.csv"))
    assert len(lines) == 1 + 2 * 400
    assert lines[0].startswith("omega_hz,re_response,im_response,amplitude_dbm,phase_deg,")
    first = lines[1].split(",")
    assert float(first[0]) == pytest.approx(100e3)
    assert first[5] == "one"


def test_invalid_override_exits_with_config_error(tmp_path):
    result = _invoke(tmp_path, "steady", "--set", "lattice.t=1.5")
    assert result.exit_code == 2
    assert "ConfigError" in result.output


def test_malformed_override(tmp_path):
    result = _invoke(tmp_path, "steady", "--set", "lattice.t")
    assert result.exit_code == 2


def test_unknown_scenario(tmp_path):
    result = _invoke(tmp_path, "steady", "--scenario", "no-such-scenario")
    assert result.exit_code == 2
    assert "ScenarioError" in result.output


def test_stability_with_custom_scenario(tmp_path):
    scenario = tmp_path / "three.json"
    scenario.write_text(json.dumps({
        "name": "three",
        "sweep_grid": [1e6, 3e6, 1e7],
    }), encoding="utf-8")
    result = _invoke(tmp_path, "stability", "--scenario", str(scenario), "--workers", "1",
                     "--set", "delay.tau_s=0")
    assert result.exit_code == 0, result.output
    lines = _data_lines(_single(tmp_path, "stability-*/stability.csv"))
    assert len(lines) == 4
    assert all(line.split(",")[5] == "" for line in lines[1:])
    summary = json.loads(
        _single(tmp_path, "stability-*/artifacts/stability_summary.json").read_text())
    assert summary["scenario"] == "three"
    assert summary["threshold"]["tau"] == 0.0


def test_simulate_baseline_fit(tmp_path, desk_config):
    config_file = tmp_path / "desk.conf"
    desk_config.to_file(config_file)
    result = _invoke(tmp_path, "simulate", "--config", str(config_file), "--scenario",
                     "baseline", "--set", "simulation.ramp_enabled=false")
    assert result.exit_code == 0, result.output
    summary = json.loads(
        _single(tmp_path, "simulate-*/artifacts/simulate_summary.json").read_text())
    assert summary["fit"]["gamma_tot"] == pytest.approx(BASELINE_GAMMA, rel=0.05)
    assert summary["well_hopping"] is False
    assert summary["decomposition"]["gamma_sym"] == 0.0


def test_sweep_atoms_rows(tmp_path, desk_config):
    config_file = tmp_path / "desk.conf"
    desk_config.to_file(config_file)
    scenario = tmp_path / "tiny.json"
    scenario.write_text(json.dumps({
        "name": "tiny",
        "overrides": {"simulation.duration_s": 0.12, "simulation.fit_stop_s": 0.1,
                      "simulation.ramp_enabled": False},
        "sweep_grid": [1e5, 1e6],
        "n_bs_values": [1],
    }), encoding="utf-8")
    result = _invoke(tmp_path, "sweep-atoms", "--config", str(config_file), "--scenario",
                     str(scenario), "--workers", "1")
    assert result.exit_code == 0, result.output
    lines = _data_lines(_single(tmp_path, "sweep-atoms-*/sweep_atoms.csv"))
    assert lines[0] == "n_bs,value,gamma_tot,r_squared,flag,config_hash"
    assert [line.split(",")[:2] for line in lines[1:]] == [["1", "100000"], ["1", "1000000"]]


def test_failed_sweep_points_are_counted(tmp_path, baseline_config):
    config_file = tmp_path / "baseline.conf"
    baseline_config.to_file(config_file)
    scenario = tmp_path / "short.json"
    scenario.write_text(json.dumps({
        "name": "short",
        "overrides": {"simulation.duration_s": 0.002},
        "sweep_grid": [0.0],
        "n_bs_values": [1],
    }), encoding="utf-8")
    result = _invoke(tmp_path, "sweep-atoms", "--config", str(config_file), "--scenario",
                     str(scenario), "--workers", "1")
    assert result.exit_code == 0, result.output
    summary = json.loads(
        _single(tmp_path, "sweep-atoms-*/artifacts/sweep_atoms_summary.json").read_text())
    assert summary["errors"] == {"counts": {"FitError": 1}, "total": 1}
    metadata = json.loads(_single(tmp_path, "sweep-atoms-*/metadata.json").read_text())
    assert metadata["status"] == "completed"
    assert metadata["error_summary"]["total"] == 1


def _runs(tmp_path, *args, **kwargs):
    return CliRunner().invoke(cli, ["runs", *args, "--out", str(tmp_path / "runs")], **kwargs)


def test_runs_list_show_delete(tmp_path):
    assert _invoke(tmp_path, "steady").exit_code == 0
    run_id = _single(tmp_path, "steady-*").name

    listed = _runs(tmp_path, "list")
    assert listed.exit_code == 0, listed.output
    assert "steady" in listed.output

    shown = _runs(tmp_path, "show", run_id)
    assert shown.exit_code == 0, shown.output
    assert json.loads(shown.output)["run_id"] == run_id

    artifact = _runs(tmp_path, "show", run_id, "--artifact", "steady_summary")
    assert artifact.exit_code == 0, artifact.output
    assert json.loads(artifact.output)["command"] == "steady"

    missing = _runs(tmp_path, "show", run_id, "--artifact", "nothing")
    assert missing.exit_code == 1

    deleted = _runs(tmp_path, "delete", run_id, "--yes")
    assert deleted.exit_code == 0, deleted.output
    assert not (tmp_path / "runs" / run_id).exists()
    index = json.loads((tmp_path / "runs" / "index.json").read_text())
    assert run_id not in index["runs"]
    assert _runs(tmp_path, "show", run_id).exit_code == 1


def test_runs_list_empty(tmp_path):
    result = _runs(tmp_path, "list")
    assert result.exit_code == 0
    assert "No runs found." in result.output
