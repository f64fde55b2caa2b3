"""Branch-and-cut solver: master LP, separation, heuristic and search."""

from .heuristic import Incumbent, heuristic_incumbent, pack_routes, route_travel, solution_cost
from .master import MasterModel, MasterSolution, build_master
from .separation import (
    CapacitySeparation,
    Component,
    analyze_fractional_components,
    enumerate_subpaths,
    extract_routes,
    separate_rounded_capacity,
    support_components,
)
from .solver import (
    CutGenerator,
    LPFailure,
    NodeState,
    SolverConfig,
    SolverReport,
    SolverStatus,
    branch_and_cut,
    on_integer_solution,
)

__all__ = [
    "Incumbent",
    "heuristic_incumbent",
    "pack_routes",
    "route_travel",
    "solution_cost",
    "MasterModel",
    "MasterSolution",
    "build_master",
    "CapacitySeparation",
    "Component",
    "analyze_fractional_components",
    "enumerate_subpaths",
    "extract_routes",
    "separate_rounded_capacity",
    "support_components",
    "CutGenerator",
    "LPFailure",
    "NodeState",
    "SolverConfig",
    "SolverReport",
    "SolverStatus",
    "branch_and_cut",
    "on_integer_solution",
]
