"""Exact branch-and-cut for the vehicle routing problem with stochastic demands."""

from .bounds import (
    BoundDomainError,
    CoveringInfeasible,
    MonotonicityRequired,
    fleet_lb_vector,
    l1_single_route,
    l2_dp,
    l3_set_covering,
    lsg18_bound,
    solve_l3,
)
from .cuts import CutKind, CutPool, CutRefused, LinearCut, cut_violation, make_cut
from .engine import SolverConfig, SolverReport, SolverStatus, branch_and_cut, heuristic_incumbent
from .instance import (
    StochasticInstance,
    generate_jabali,
    make_instance,
    parse_cvrplib,
    read_cvrplib,
)
from .monotonicity import (
    MonotonicityCertificate,
    Verdict,
    certify_family,
    certify_instance,
    check_condition_enumerative,
)
from .recourse import (
    DEFAULT_TRUNCATION,
    RecourseEvaluator,
    expected_recourse_path,
    expected_recourse_route,
    expected_recourse_solution,
    recourse_oracle_discrete,
)
from .stochastic import Binomial, Erlang, FiniteDiscrete, NegativeBinomial, Normal, Poisson

__version__ = "0.1.0"
