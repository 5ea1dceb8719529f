"""Service-system design with M/G/1 congestion.

Locates facilities, sizes their service rates and assigns demand zones by
solving mixed-integer second-order cone programs with a bundled
interior-point solver and a branch-and-bound search.
"""

from .bnb import SearchSettings, SearchStatus, SolveReport, solve
from .formulations import FormulationKind, build, objective_value
from .instance import DemandZone, FacilitySpec, Instance, InstanceError, generate_instance, load_instance, save_instance
from .oracle import solve_exhaustive
from .queueing import LocationScaleSpec, wt_individual, wt_total
from .solution import CostBreakdown, Solution

__version__ = "0.1.0"

__all__ = [
    "CostBreakdown",
    "DemandZone",
    "FacilitySpec",
    "FormulationKind",
    "Instance",
    "InstanceError",
    "LocationScaleSpec",
    "SearchSettings",
    "SearchStatus",
    "Solution",
    "SolveReport",
    "build",
    "generate_instance",
    "load_instance",
    "objective_value",
    "save_instance",
    "solve",
    "solve_exhaustive",
    "wt_individual",
    "wt_total",
]
