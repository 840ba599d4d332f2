"""
optolattice: simulation toolkit for atoms in an optical lattice coupled by light
to a membrane-in-the-middle optomechanical cavity.
"""

__version__ = "0.1.0"

from optolattice.config_manager import SystemConfig, parse_config, serialize_config  # noqa: E402
from optolattice.error_handling import OptolatticeError  # noqa: E402

__all__ = ["SystemConfig", "parse_config", "serialize_config", "OptolatticeError"]
