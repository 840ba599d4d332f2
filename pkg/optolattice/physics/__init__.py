"""
Physics of the atom-membrane lattice: parameters, light fields, equilibria,
nonlinear and linearized dynamics, and atomic back-action.
"""

from optolattice.physics.params import CONSTANTS, DerivedParams, derive
from optolattice.physics.steadystate import SteadyState, solve_steady_state
from optolattice.physics.dynamics import SystemState, Trajectory, integrate, extract_damping
from optolattice.physics.linear import LinearModel, linear_model_for, stability_eigenvalues

__all__ = [
    "CONSTANTS",
    "DerivedParams",
    "derive",
    "SteadyState",
    "solve_steady_state",
    "SystemState",
    "Trajectory",
    "integrate",
    "extract_damping",
    "LinearModel",
    "linear_model_for",
    "stability_eigenvalues",
]
