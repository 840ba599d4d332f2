"""
Centralized configuration management for the optolattice toolkit.

All physical parameters live in one validated ``SystemConfig`` made of section
models. Configurations are exchanged as flat ``section.key = value`` text, can be
overridden from the environment, and are identified by a content hash that is
stamped on every emitted result row.
"""

import hashlib
import logging
import math
import os
from pathlib import Path
from typing import TYPE_CHECKING, Any, Dict, List, Literal, Mapping, Optional, Tuple, Type, Union

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from optolattice.error_handling import ConfigError

if TYPE_CHECKING:
    from optolattice.physics.params import DerivedParams

logger = logging.getLogger(__name__)

ENV_PREFIX = "OPTOLATTICE_"
TWO_PI = 2.0 * math.pi


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", validate_assignment=True)


class MembraneCavityConfig(_Section):
    """Membrane oscillator and the cavity around it."""

    mass_kg: float = Field(117e-12, gt=0, description="effective membrane mass M")
    omega_m_hz: float = Field(276e3, gt=0, description="membrane frequency Ω_m/2π")
    gamma_m_per_s: float = Field(0.96, ge=0, description="intrinsic energy damping Γ_m")
    gamma_opt_per_s: float = Field(10.6, ge=0, description="optomechanical damping Γ_opt")
    kappa_hz: float = Field(290e6, gt=0, description="cavity linewidth κ/2π")
    finesse: float = Field(570.0, gt=0)
    r_m: float = Field(0.41, ge=0, le=1, description="membrane amplitude reflectivity")
    g0_per_s: float = Field(690.0, ge=0, description="single-photon coupling g0")
    omega_c_hz: Optional[float] = Field(None, gt=0, description="cavity frequency; c/λ if unset")
    placement_factor: float = Field(0.63, gt=0, le=1)
    eta: float = Field(1.0, gt=0, le=1, description="incoupling efficiency η")

    @property
    def omega_m(self) -> float:
        return TWO_PI * self.omega_m_hz

    @property
    def kappa(self) -> float:
        return TWO_PI * self.kappa_hz

    @property
    def gamma_m_prime(self) -> float:
        """Γ_m' = Γ_m + Γ_opt."""
        return self.gamma_m_per_s + self.gamma_opt_per_s


class LatticeAtomConfig(_Section):
    """Atoms in the optical lattice and the lattice beam."""

    n_lat: float = Field(3.0e6, ge=0, description="atoms in the lattice volume N_lat")
    n_bs: int = Field(2, ge=1, description="number of atomic beam splitters")
    atom_mass_kg: float = Field(1.443160648e-25, gt=0, description="87Rb mass")
    gamma_a_per_s: float = Field(233.0, ge=0, description="atomic motion damping Γ_a")
    delta_la_hz: float = Field(-960e6, lt=0, description="laser-atom detuning Δ_LA/2π")
    natural_linewidth_hz: float = Field(6.066e6, gt=0, description="Γ/2π of the D2 line")
    wavelength_m: float = Field(780e-9, gt=0)
    waist_m: float = Field(280e-6, gt=0)
    sigma_l_m2: Optional[float] = Field(None, gt=0, description="mode area; π w0²/2 if unset")
    power_w: float = Field(3.4e-3, ge=0, description="launched lattice power P0")
    t: float = Field(0.71, gt=0, le=1, description="amplitude transmission atoms ↔ cavity")
    trapped_fraction: float = Field(0.11, gt=0, le=1, description="trapped fraction α")
    grating_fraction: float = Field(0.33, gt=0, le=1,
                                    description="share of N_lat forming the density grating")
    omega_a_hz: Optional[float] = Field(None, gt=0, description="supplied Ω_a/2π")
    atom_number_mode: Literal["resonant", "all-atoms"] = "resonant"

    @property
    def delta_la(self) -> float:
        return TWO_PI * self.delta_la_hz

    @property
    def natural_linewidth(self) -> float:
        return TWO_PI * self.natural_linewidth_hz

    @property
    def sigma_l(self) -> float:
        if self.sigma_l_m2 is not None:
            return self.sigma_l_m2
        return math.pi * self.waist_m ** 2 / 2.0

    @property
    def wavenumber(self) -> float:
        return TWO_PI / self.wavelength_m


class SimulationConfig(_Section):
    """Time integration of the nonlinear equations of motion."""

    steps_per_period: int = Field(200, ge=50)
    record_every: int = Field(10, ge=1)
    duration_s: float = Field(0.36, gt=0)
    ramp_enabled: bool = True
    ramp_s: float = Field(0.01, ge=0)
    ramp_start_power_w: float = Field(0.1e-3, ge=0)
    initial_displacement_thermal: float = Field(1e-3, ge=0)
    initial_displacement_m: Optional[float] = None
    temperature_k: float = Field(300.0, gt=0)
    fit_start_s: float = Field(0.05, ge=0)
    fit_stop_s: float = Field(0.3, gt=0)
    envelope_periods: int = Field(3, ge=1)
    fixed_mirror: bool = False
    anharmonicity: float = Field(3.7e-4, gt=0, description="scales the lattice nonlinearity")

    @model_validator(mode="after")
    def _window_ordered(self) -> "SimulationConfig":
        if self.fit_stop_s <= self.fit_start_s:
            raise ValueError("fit_stop_s must exceed fit_start_s")
        return self


class DelayConfig(_Section):
    """Retardation between atoms and membrane."""

    enabled: bool = False
    tau_s: float = Field(36e-9, ge=0)
    tau_prop_s: float = Field(30e-9, ge=0)
    tau_cav_s: float = Field(0.6e-9, ge=0)


class BackactionConfig(_Section):
    """Back-action measurement profile and its calibration chain."""

    n_atoms: float = Field(3.0e8, ge=0)
    n_bs: int = Field(2, ge=1)
    omega_a_hz: float = Field(275e3, gt=0)
    gamma_a_hz: float = Field(150e3, gt=0)
    t: float = Field(0.5, gt=0, le=1, description="amplitude transmission through the EOM path")
    delta_la_hz: float = Field(-1.0e9, lt=0)
    nu: Optional[float] = Field(None, ge=0, description="overrides the derived ν")
    phi_rms_rad: float = Field(0.116, gt=0)
    pickup: float = Field(0.03, gt=0, le=1)
    pd_conversion_v_per_w: float = Field(350.0, gt=0)
    impedance_ohm: float = Field(50.0, gt=0)
    bandwidth_hz: float = Field(18.0, gt=0)
    offset_db: float = -43.0
    apply_offset: bool = False
    freq_min_hz: float = Field(100e3, gt=0)
    freq_max_hz: float = Field(600e3, gt=0)
    points: int = Field(400, ge=2)
    grid: Literal["log", "linear"] = "log"

    @model_validator(mode="after")
    def _range_ordered(self) -> "BackactionConfig":
        if self.freq_max_hz <= self.freq_min_hz:
            raise ValueError("freq_max_hz must exceed freq_min_hz")
        return self


class LoggingConfig(_Section):
    """Configuration for logging."""

    level: str = "INFO"
    file_path: Optional[str] = None
    rich: bool = False

    @field_validator("level")
    @classmethod
    def _known_level(cls, value: str) -> str:
        if value.upper() not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
            raise ValueError(f"unknown log level {value!r}")
        return value.upper()


SECTIONS: Dict[str, Type[_Section]] = {
    "membrane": MembraneCavityConfig,
    "lattice": LatticeAtomConfig,
    "simulation": SimulationConfig,
    "delay": DelayConfig,
    "backaction": BackactionConfig,
    "logging": LoggingConfig,
}


class SystemConfig(BaseModel):
    """Complete parameter set of one atom-membrane system."""

    model_config = ConfigDict(extra="forbid")

    membrane: MembraneCavityConfig = Field(default_factory=MembraneCavityConfig)
    lattice: LatticeAtomConfig = Field(default_factory=LatticeAtomConfig)
    simulation: SimulationConfig = Field(default_factory=SimulationConfig)
    delay: DelayConfig = Field(default_factory=DelayConfig)
    backaction: BackactionConfig = Field(default_factory=BackactionConfig)
    logging: LoggingConfig = Field(default_factory=LoggingConfig)

    @classmethod
    def from_file(cls, config_path: Union[str, Path]) -> "SystemConfig":
        """Load configuration from a dotted-key text file."""
        return load_config(config_path)

    def to_file(self, config_path: Union[str, Path]) -> None:
        """Save configuration as dotted-key text."""
        config_path = Path(config_path)
        config_path.parent.mkdir(parents=True, exist_ok=True)
        config_path.write_text(serialize_config(self), encoding="utf-8")
        logger.info(f"Configuration saved to {config_path}")

    def derived(self) -> "DerivedParams":
        """Derived dimensionless and composite parameters."""
        from optolattice.physics.params import derive

        return derive(self)

    def with_overrides(self, overrides: Mapping[str, Any]) -> "SystemConfig":
        return apply_overrides(self, overrides)

    def validate(self) -> List[str]:  # type: ignore[override]
        """Validate cross-section consistency and return list of issues."""
        issues: List[str] = []
        derived = self.derived()

        if self.lattice.omega_a_hz is not None and derived.omega_a_fields > 0:
            mismatch = abs(derived.omega_a - derived.omega_a_fields) / derived.omega_a
            if mismatch > 0.05:
                issues.append(
                    f"supplied Ω_a differs from the field-derived value by {mismatch:.1%}"
                )
        if derived.nu >= 1.0:
            issues.append(f"ν = {derived.nu:.3g} is outside the linearized model's range (ν < 1)")

        from optolattice.physics.backaction import backaction_params_from_config

        ba_nu = backaction_params_from_config(self).nu
        if ba_nu >= 1.0:
            issues.append(f"back-action ν = {ba_nu:.3g} is outside the two-BS expansion (ν < 1)")

        if self.simulation.fit_stop_s + self.ramp_end() > self.simulation.duration_s:
            issues.append("fit window extends beyond the simulated duration")
        if self.delay.enabled and self.delay.tau_s == 0:
            issues.append("delay enabled with τ = 0")
        return issues

    def ramp_end(self) -> float:
        return self.simulation.ramp_s if self.simulation.ramp_enabled else 0.0


def _parse_value(raw: str) -> Any:
    text = raw.strip()
    lowered = text.lower()
    if lowered in ("true", "false"):
        return lowered == "true"
    if lowered in ("none", "null", ""):
        return None
    if len(text) >= 2 and text[0] == text[-1] and text[0] in ("'", '"'):
        return text[1:-1]
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def _split_key(key: str) -> Tuple[str, str]:
    section, _, name = key.strip().partition(".")
    return section, name


def is_known_key(key: str) -> bool:
    section, name = _split_key(key)
    model = SECTIONS.get(section)
    return model is not None and name in model.model_fields


def _build(data: Dict[str, Dict[str, Any]]) -> SystemConfig:
    try:
        return SystemConfig.model_validate(data)
    except ValidationError as e:
        details = [
            {"key": ".".join(str(p) for p in err["loc"]), "message": err["msg"]}
            for err in e.errors()
        ]
        keys = ", ".join(d["key"] for d in details)
        raise ConfigError(f"invalid configuration values: {keys}", {"errors": details}) from e


def _nested(entries: Mapping[str, Any]) -> Dict[str, Dict[str, Any]]:
    unknown = sorted(key for key in entries if not is_known_key(key))
    if unknown:
        raise ConfigError(
            f"unknown configuration keys: {', '.join(unknown)}",
            {"unknown_keys": unknown},
        )
    data: Dict[str, Dict[str, Any]] = {}
    for key, value in entries.items():
        section, name = _split_key(key)
        data.setdefault(section, {})[name] = value
    return data


def parse_config(text: str) -> SystemConfig:
    """Parse flat ``section.key = value`` text into a validated SystemConfig.

    Omitted keys take their defaults. Lines may carry ``#`` comments.

    Raises:
        ConfigError: On unknown keys, malformed lines, type mismatches or
            violated invariants.
    """
    entries: Dict[str, Any] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'", {"line": raw})
        key, value = (part.strip() for part in line.split("=", 1))
        if key in entries:
            raise ConfigError(f"line {lineno}: duplicate key {key}", {"key": key})
        entries[key] = _parse_value(value)
    return _build(_nested(entries))


def _format_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if value is None:
        return "none"
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def serialize_config(config: SystemConfig) -> str:
    """Write every key of ``config`` sorted, floats with 17 significant digits."""
    lines = []
    dumped = config.model_dump()
    for section in sorted(dumped):
        for name in sorted(dumped[section]):
            lines.append(f"{section}.{name} = {_format_value(dumped[section][name])}")
    return "\n".join(lines) + "\n"


def config_hash(config: SystemConfig) -> str:
    """Content hash identifying a configuration."""
    return hashlib.sha256(serialize_config(config).encode("utf-8")).hexdigest()[:16]


def apply_overrides(config: SystemConfig, overrides: Mapping[str, Any]) -> SystemConfig:
    """Return a new configuration with dotted-key overrides applied."""
    if not overrides:
        return config
    parsed = {
        key: _parse_value(value) if isinstance(value, str) else value
        for key, value in overrides.items()
    }
    patch = _nested(parsed)
    data = config.model_dump()
    for section, values in patch.items():
        data[section].update(values)
    return _build(data)


def load_config(config_path: Union[str, Path]) -> SystemConfig:
    """Load configuration from a text file, falling back to defaults if absent."""
    config_path = Path(config_path)
    if not config_path.exists():
        logger.warning(f"Config file {config_path} not found, using defaults")
        return SystemConfig()
    return parse_config(config_path.read_text(encoding="utf-8"))


def env_overrides(environ: Optional[Mapping[str, str]] = None) -> Dict[str, str]:
    """Collect ``OPTOLATTICE_<SECTION>__<KEY>`` variables as dotted keys."""
    environ = os.environ if environ is None else environ
    overrides: Dict[str, str] = {}
    for name, value in environ.items():
        if not name.startswith(ENV_PREFIX):
            continue
        section, sep, key = name[len(ENV_PREFIX):].partition("__")
        if not sep:
            continue
        overrides[f"{section.lower()}.{key.lower()}"] = value
    return overrides


def config_from_env(base: Optional[SystemConfig] = None,
                    environ: Optional[Mapping[str, str]] = None,
                    dotenv_path: Optional[Union[str, Path]] = None) -> SystemConfig:
    """Apply environment overrides (after loading a ``.env`` file) to ``base``."""
    if environ is None:
        load_dotenv(dotenv_path=dotenv_path, override=False)
    config = base or SystemConfig()
    overrides = env_overrides(environ)
    if overrides:
        logger.debug(f"Environment overrides: {sorted(overrides)}")
    return apply_overrides(config, overrides)
