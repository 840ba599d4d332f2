import pytest

from optolattice.config_manager import (
    SystemConfig,
    apply_overrides,
    config_from_env,
    config_hash,
    env_overrides,
    load_config,
    parse_config,
    serialize_config,
)
from optolattice.error_handling import ConfigError


def test_empty_text_gives_defaults():
    config = parse_config("")
    assert config == SystemConfig()
    assert config.membrane.mass_kg == 117e-12
    assert config.membrane.omega_m_hz == 276e3
    assert config.lattice.gamma_a_per_s == 233.0
    assert config.lattice.trapped_fraction == 0.11


def test_parse_values_and_comments():
    text = """
    # membrane tuned down
    membrane.omega_m_hz = 276.5e3   # Hz
    lattice.n_bs = 4
    lattice.atom_number_mode = all-atoms
    simulation.ramp_enabled = false
    lattice.omega_a_hz = none
    """
    config = parse_config(text)
    assert config.membrane.omega_m_hz == 276.5e3
    assert config.lattice.n_bs == 4
    assert config.lattice.atom_number_mode == "all-atoms"
    assert config.simulation.ramp_enabled is False
    assert config.lattice.omega_a_hz is None


def test_range_violation_is_config_error():
    with pytest.raises(ConfigError) as info:
        parse_config("lattice.t = 1.5")
    assert "lattice.t" in str(info.value)


def test_blue_detuning_rejected():
    with pytest.raises(ConfigError):
        parse_config("lattice.delta_la_hz = 1e9")


def test_unknown_keys_are_listed():
    with pytest.raises(ConfigError) as info:
        parse_config("lattice.foo = 1\nmembrane.bar = 2\nlattice.n_bs = 2")
    assert info.value.context["unknown_keys"] == ["lattice.foo", "membrane.bar"]


def test_malformed_and_duplicate_lines():
    with pytest.raises(ConfigError):
        parse_config("lattice.n_bs 2")
    with pytest.raises(ConfigError):
        parse_config("lattice.n_bs = 2\nlattice.n_bs = 3")


def test_type_mismatch():
    with pytest.raises(ConfigError):
        parse_config("lattice.n_bs = two")


def test_serialize_round_trip():
    config = parse_config("membrane.omega_m_hz = 276123.456789\nlattice.n_lat = 8e7\n"
                          "delay.enabled = true")
    text = serialize_config(config)
    again = parse_config(text)
    assert again == config
    assert serialize_config(again) == text


def test_config_hash_tracks_content():
    a = SystemConfig()
    b = a.with_overrides({"lattice.n_lat": 8e7})
    assert config_hash(a) == config_hash(SystemConfig())
    assert config_hash(a) != config_hash(b)
    assert len(config_hash(a)) == 16


def test_apply_overrides_parses_strings():
    config = apply_overrides(SystemConfig(), {"lattice.n_bs": "3", "delay.enabled": "true"})
    assert config.lattice.n_bs == 3
    assert config.delay.enabled is True
    with pytest.raises(ConfigError):
        apply_overrides(SystemConfig(), {"nosection.key": 1})


def test_fit_window_must_be_ordered():
    with pytest.raises(ConfigError):
        parse_config("simulation.fit_start_s = 0.3\nsimulation.fit_stop_s = 0.1")


def test_file_round_trip(tmp_path):
    path = tmp_path / "system.conf"
    config = SystemConfig().with_overrides({"lattice.n_bs": 3})
    config.to_file(path)
    assert SystemConfig.from_file(path) == config


def test_missing_file_falls_back_to_defaults(tmp_path):
    assert load_config(tmp_path / "absent.conf") == SystemConfig()


def test_env_overrides():
    environ = {
        "OPTOLATTICE_MEMBRANE__OMEGA_M_HZ": "2000",
        "OPTOLATTICE_LATTICE__N_BS": "4",
        "OPTOLATTICE_IGNORED": "x",
        "HOME": "/root",
    }
    assert env_overrides(environ) == {"membrane.omega_m_hz": "2000", "lattice.n_bs": "4"}
    config = config_from_env(SystemConfig(), environ=environ)
    assert config.membrane.omega_m_hz == 2000.0
    assert config.lattice.n_bs == 4


def test_unknown_env_key_rejected():
    with pytest.raises(ConfigError):
        config_from_env(SystemConfig(), environ={"OPTOLATTICE_LATTICE__NOPE": "1"})


def test_validate_reports_soft_issues():
    config = SystemConfig().with_overrides({"delay.enabled": True, "delay.tau_s": 0.0})
    issues = config.validate()
    assert any("τ = 0" in issue for issue in issues)
