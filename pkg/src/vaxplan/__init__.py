"""Planning of multi-modal vaccination campaigns.

Builds the bi-objective MILP (risk-weighted vaccination delay against the
cost of temporary centers), scalarizes it with a normalized weighted sum
and reports campaign indicators.
"""

from .instance import Center, Group, InputError, Instance, InvalidInstanceError, RobustInstance, validate
from .model import add_group_restriction, build_baseline, build_robust
from .scalarization import NormalizationBounds, compute_bounds, solve_blend, sweep
from .solve import PlanSolution, SolveRequest, solve

__version__ = "0.1.0"

__all__ = [
    "Center",
    "Group",
    "InputError",
    "Instance",
    "InvalidInstanceError",
    "NormalizationBounds",
    "PlanSolution",
    "RobustInstance",
    "SolveRequest",
    "add_group_restriction",
    "build_baseline",
    "build_robust",
    "compute_bounds",
    "solve",
    "solve_blend",
    "sweep",
    "validate",
]
