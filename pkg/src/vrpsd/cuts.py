"""Linear inequalities over edge, recourse and fleet variables.

Variables are named by tuples: ``("x", i, j)`` with ``i < j`` for an edge
(``i = 0`` is the depot), ``("theta", i)`` for the recourse share of
customer ``i`` and ``("z", m)`` for the choice of ``m`` vehicles.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Hashable, Iterable, Mapping, Optional, Sequence

from .instance import StochasticInstance

__all__ = [
    "CutKind",
    "LinearCut",
    "CutPool",
    "CutRefused",
    "EvaluationError",
    "edge",
    "path_edges",
    "inner_edges",
    "make_cut",
    "p_cut",
    "s_cut",
    "r_cut",
    "classic_cut",
    "fleet_cut",
    "capacity_cut",
    "cut_violation",
    "is_monotone_instance",
]


class CutKind(str, Enum):
    P = "PCut"
    S = "SCut"
    R = "RCut"
    CLASSIC = "Classic"
    FLEET = "FleetLB"
    CAPACITY = "Capacity"


class CutRefused(ValueError):
    """The requested cut is not valid for this instance."""


class EvaluationError(KeyError):
    """A cut references a variable without a value."""


def edge(i: int, j: int) -> tuple:
    if i == j:
        raise ValueError(f"loop edge at node {i}")
    return ("x", i, j) if i < j else ("x", j, i)


def path_edges(path: Sequence[int]) -> list[tuple]:
    return [edge(a, b) for a, b in zip(path, path[1:])]


def inner_edges(S: Iterable[int]) -> list[tuple]:
    return [edge(a, b) for a, b in itertools.combinations(sorted(set(S)), 2)]


@dataclass(frozen=True)
class LinearCut:
    kind: CutKind
    terms: Mapping[Hashable, float]
    sense: str  # ">=" or "<="
    rhs: float
    payload: object = None

    def __post_init__(self):
        if self.sense not in (">=", "<="):
            raise ValueError(f"bad sense {self.sense!r}")
        for k, v in self.terms.items():
            if not math.isfinite(v):
                raise ValueError(f"non-finite coefficient for {k}")
        if not math.isfinite(self.rhs):
            raise ValueError("non-finite right-hand side")

    @property
    def key(self) -> tuple:
        return (self.kind, _canonical(self.kind, self.payload))

    def variables(self) -> list:
        return list(self.terms)

    def lhs(self, values: Mapping) -> float:
        try:
            return math.fsum(c * values[k] for k, c in self.terms.items())
        except KeyError as exc:
            raise EvaluationError(f"no value for variable {exc.args[0]!r}") from None

    def describe(self) -> dict:
        return {
            "kind": self.kind.value,
            "payload": _payload_record(self.payload),
            "sense": self.sense,
            "rhs": self.rhs,
            "terms": {"/".join(map(str, k)): v for k, v in self.terms.items()},
        }


def _canonical(kind: CutKind, payload):
    if kind in (CutKind.P, CutKind.R):
        p = tuple(payload)
        return p if p <= p[::-1] else p[::-1]
    if kind in (CutKind.S, CutKind.CAPACITY):
        return frozenset(payload)
    if kind is CutKind.CLASSIC:
        routes, m = payload
        canon = []
        for r in routes:
            r = tuple(r)
            canon.append(r if r <= r[::-1] else r[::-1])
        return (frozenset(canon), m)
    if kind is CutKind.FLEET:
        return "fleet"
    return payload


def _payload_record(payload):
    if isinstance(payload, (set, frozenset)):
        return sorted(payload)
    if isinstance(payload, dict):
        return {str(k): v for k, v in payload.items()}
    if isinstance(payload, tuple):
        return [_payload_record(p) if isinstance(p, (tuple, frozenset, set, list)) else p for p in payload]
    return payload


def cut_violation(cut: LinearCut, values: Mapping) -> float:
    """Positive when ``values`` violate ``cut``."""
    lhs = cut.lhs(values)
    return cut.rhs - lhs if cut.sense == ">=" else lhs - cut.rhs


# ----------------------------------------------------------------------
# constructors


_MONO_CACHE: dict[int, tuple[object, bool]] = {}


def is_monotone_instance(instance: StochasticInstance) -> bool:
    hit = _MONO_CACHE.get(id(instance))
    if hit is not None and hit[0] is instance:
        return hit[1]
    from .monotonicity import certify_instance

    ok = certify_instance(instance).is_monotone
    _MONO_CACHE[id(instance)] = (instance, ok)
    return ok


def _add(terms: dict, key, coef: float) -> None:
    terms[key] = terms.get(key, 0.0) + coef


def p_cut(path: Sequence[int], recourse: float) -> LinearCut:
    """``sum theta(p) >= Q(r) (x(p) - |p| + 1)`` where ``|p|`` counts edges."""
    path = tuple(path)
    terms: dict = {}
    for i in path:
        _add(terms, ("theta", i), 1.0)
    for e in path_edges(path):
        _add(terms, e, -recourse)
    n_edges = len(path) - 1
    return LinearCut(CutKind.P, terms, ">=", recourse * (1 - n_edges), path)


def s_cut(S: Iterable[int], bound: float, instance: StochasticInstance) -> LinearCut:
    """``sum theta(S) >= L(S) (x(E(S)) - |S| + ceil(mu(S)/Q) + 1)``."""
    ids = tuple(sorted(set(S)))
    k = instance.min_vehicles(ids)
    terms: dict = {("theta", i): 1.0 for i in ids}
    for e in inner_edges(ids):
        terms[e] = -bound
    return LinearCut(CutKind.S, terms, ">=", bound * (k + 1 - len(ids)), frozenset(ids))


def r_cut(route: Sequence[int], recourse: float) -> LinearCut:
    """Route cut that only binds when exactly this route is in the solution.

    For a single customer the route is ``(0, i, 0)`` and the cut is written
    ``theta_i >= Q(r) (x_0i - 1)``, which equals ``Q(r)`` when ``x_0i = 2``.
    For two customers the activity term is ``3 x_ab + x_0a + x_0b - 4``.
    """
    route = tuple(route)
    t = len(route)
    terms: dict = {("theta", i): 1.0 for i in route}
    if t == 1:
        terms[edge(0, route[0])] = -recourse
        return LinearCut(CutKind.R, terms, ">=", -recourse, route)
    if t == 2:
        # two singleton routes give x_0a = x_0b = 2; a weight of 3 on the
        # single inner edge keeps the cut inactive for them
        terms[edge(*route)] = -3.0 * recourse
        _add(terms, edge(0, route[0]), -recourse)
        _add(terms, edge(0, route[1]), -recourse)
        return LinearCut(CutKind.R, terms, ">=", -4.0 * recourse, route)
    for e in path_edges(route):
        _add(terms, e, -2.0 * recourse)
    _add(terms, edge(0, route[0]), -recourse)
    _add(terms, edge(0, route[-1]), -recourse)
    return LinearCut(CutKind.R, terms, ">=", recourse * (-2 * (t - 1) - 1), route)


def classic_cut(
    routes: Sequence[Sequence[int]],
    m: int,
    recourse: float,
    lower: float,
    instance: StochasticInstance,
) -> LinearCut:
    """Aggregated optimality cut that binds only at one integer solution.

    With ``E`` the customer-to-customer edges of the solution and ``m`` its
    fleet size: ``sum theta >= (Q - L)(x(E) - |E| + 1 - sum_{m' != m} z_m') + L``.
    Customer edges fix the routes once the fleet size is fixed, so this
    is the single-solution cut written over the variables of this model.
    """
    routes = [tuple(r) for r in routes]
    E = [e for r in routes for e in path_edges(r)]
    gap = recourse - lower
    terms: dict = {("theta", i): 1.0 for i in instance.customer_ids}
    for e in E:
        _add(terms, e, -gap)
    for mm in instance.fleet_sizes:
        if mm != m:
            _add(terms, ("z", mm), gap)
    rhs = gap * (1 - len(E)) + lower
    return LinearCut(CutKind.CLASSIC, terms, ">=", rhs, (tuple(routes), m))


def fleet_cut(bounds: Mapping[int, float], instance: StochasticInstance) -> LinearCut:
    """``sum theta >= sum_m L_m z_m``; infinite entries are left out."""
    terms: dict = {("theta", i): 1.0 for i in instance.customer_ids}
    for m, v in bounds.items():
        if math.isfinite(v) and v != 0.0:
            terms[("z", m)] = -float(v)
    return LinearCut(CutKind.FLEET, terms, ">=", 0.0, dict(bounds))


def capacity_cut(S: Iterable[int], instance: StochasticInstance) -> LinearCut:
    """``x(E(S)) <= |S| - ceil(mu(S)/Q)``."""
    ids = tuple(sorted(set(S)))
    terms = {e: 1.0 for e in inner_edges(ids)}
    return LinearCut(CutKind.CAPACITY, terms, "<=", float(len(ids) - instance.min_vehicles(ids)), frozenset(ids))


def make_cut(
    kind,
    payload,
    bound_value: Optional[float],
    instance: StochasticInstance,
    *,
    lower: float = 0.0,
    monotone: Optional[bool] = None,
) -> LinearCut:
    """Build a cut of the given kind.

    ``bound_value`` is the recourse (path, route and classic cuts) or the
    lower bound ``L(S)`` (set cuts).  Fleet cuts take the ``{m: L_m}`` map
    as payload; capacity cuts ignore ``bound_value``.  Path cuts are refused
    on instances that are not shown monotone.
    """
    kind = CutKind(kind)
    if kind is CutKind.P:
        if monotone is None:
            monotone = is_monotone_instance(instance)
        if not monotone:
            raise CutRefused("path cuts need the monotonicity property; use route cuts (RCut) instead")
        return p_cut(payload, bound_value)
    if kind is CutKind.S:
        return s_cut(payload, bound_value, instance)
    if kind is CutKind.R:
        return r_cut(payload, bound_value)
    if kind is CutKind.CLASSIC:
        routes, m = payload
        return classic_cut(routes, m, bound_value, lower, instance)
    if kind is CutKind.FLEET:
        return fleet_cut(payload, instance)
    if kind is CutKind.CAPACITY:
        return capacity_cut(payload, instance)
    raise ValueError(f"unknown cut kind {kind}")  # pragma: no cover


@dataclass
class CutPool:
    """Append-only collection with duplicate suppression."""

    cuts: list[LinearCut] = field(default_factory=list)
    keys: set = field(default_factory=set)

    def add(self, cut: LinearCut) -> bool:
        k = cut.key
        if k in self.keys:
            return False
        self.keys.add(k)
        self.cuts.append(cut)
        return True

    def __contains__(self, cut: LinearCut) -> bool:
        return cut.key in self.keys

    def __len__(self) -> int:
        return len(self.cuts)

    def __iter__(self):
        return iter(self.cuts)

    def counts(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for c in self.cuts:
            out[c.kind.value] = out.get(c.kind.value, 0) + 1
        return out
