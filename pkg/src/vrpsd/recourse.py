"""Expected detour-to-depot recourse of paths, routes and solutions.

A vehicle serving ``(i_1, ..., i_t)`` makes its ``l``-th return trip at
``i_j`` exactly when ``xi_1 + ... + xi_{j-1} <= lQ < xi_1 + ... + xi_j``,
paying ``2 c_{0 i_j}``.  The expected cost is a double sum over positions
and restock indices.

The restock index ``l`` is truncated per customer *set*: term ``l`` is kept
while the probability that the path's total demand exceeds ``lQ`` is at
least ``truncation``.  Every ordering of the same set therefore uses the
same terms, and a subset never uses more terms than its superset.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .instance import StochasticInstance
from .stochastic import FiniteDiscrete, Normal, clamp_probability, prefix_cdf_matrix, sum_of

__all__ = [
    "DEFAULT_TRUNCATION",
    "Path",
    "RoutePlan",
    "PartitionError",
    "OracleSizeError",
    "restock_terms",
    "expected_recourse_path",
    "expected_recourse_route",
    "expected_recourse_solution",
    "best_orientation",
    "path_contributions",
    "recourse_oracle_discrete",
    "RecourseEvaluator",
]

DEFAULT_TRUNCATION = 1e-4
# Survival probabilities below this are treated as exactly zero.
_ZERO_MASS = 1e-15
_MAX_RESTOCKS = 10_000
_ORACLE_LIMIT = 10**7

Path = tuple[int, ...]


class PartitionError(ValueError):
    """Routes do not cover every customer exactly once."""


class OracleSizeError(ValueError):
    """The scenario space is too large to enumerate."""


@dataclass(frozen=True)
class RoutePlan:
    """A route ``(0, i_1, ..., i_t, 0)`` given by its customer sequence."""

    path: Path

    def __post_init__(self):
        object.__setattr__(self, "path", tuple(int(i) for i in self.path))
        if len(set(self.path)) != len(self.path):
            raise ValueError(f"route visits a customer twice: {self.path}")

    def expected_demand(self, instance: StochasticInstance) -> float:
        return instance.load(self.path)

    def is_feasible(self, instance: StochasticInstance) -> bool:
        return self.expected_demand(instance) <= instance.capacity + 1e-9

    def canonical(self) -> Path:
        p = self.path
        return p if p <= p[::-1] else p[::-1]


def restock_terms(demands, capacity: float, truncation: float = DEFAULT_TRUNCATION) -> int:
    """Number of restock indices ``l`` kept for a set with these demands."""
    if not demands:
        return 0
    total = sum_of(demands, coerce=True)
    k = 0
    while k < _MAX_RESTOCKS:
        surv = 1.0 - float(total.cdf((k + 1) * capacity))
        if surv <= _ZERO_MASS or surv < truncation:
            break
        k += 1
    return k


def _failure_matrix(demands, capacity: float, K: int) -> np.ndarray:
    """``P[j, l-1]``: probability that the l-th restock happens at position j."""
    thresholds = capacity * np.arange(1, K + 1)
    F = prefix_cdf_matrix(demands, thresholds)
    P = F[:-1] - F[1:]
    if np.any(P < -1e-12) and not any(isinstance(d, Normal) for d in demands):
        raise ArithmeticError(f"negative failure probability {P.min()!r}")
    return np.clip(P, 0.0, 1.0)


def path_contributions(
    path: Sequence[int],
    instance: StochasticInstance,
    truncation: float = DEFAULT_TRUNCATION,
    *,
    K: Optional[int] = None,
) -> np.ndarray:
    """Expected recourse paid at each position of ``path`` (same order)."""
    path = tuple(path)
    if not path:
        return np.zeros(0)
    demands = instance.demands(path)
    if K is None:
        K = restock_terms(demands, instance.capacity, truncation)
    if K == 0:
        return np.zeros(len(path))
    P = _failure_matrix(demands, instance.capacity, K)
    c = instance.cost[0, list(path)]
    return 2.0 * c * P.sum(axis=1)


def expected_recourse_path(
    path: Sequence[int],
    instance: StochasticInstance,
    truncation: float = DEFAULT_TRUNCATION,
) -> float:
    """Expected recourse of ``path`` travelled in the given orientation."""
    return float(path_contributions(path, instance, truncation).sum())


def best_orientation(
    path: Sequence[int], instance: StochasticInstance, truncation: float = DEFAULT_TRUNCATION
) -> tuple[Path, float]:
    """The cheaper orientation of a route and its recourse."""
    path = tuple(path)
    fwd = expected_recourse_path(path, instance, truncation)
    if len(path) <= 1:
        return path, fwd
    bwd = expected_recourse_path(path[::-1], instance, truncation)
    return (path, fwd) if fwd <= bwd else (path[::-1], bwd)


def expected_recourse_route(
    route, instance: StochasticInstance, truncation: float = DEFAULT_TRUNCATION
) -> float:
    """Minimum recourse over both orientations of ``route``."""
    path = route.path if isinstance(route, RoutePlan) else tuple(route)
    return best_orientation(path, instance, truncation)[1]


def _check_partition(paths: Sequence[Path], instance: StochasticInstance) -> None:
    seen: dict[int, int] = {}
    for p in paths:
        for i in p:
            if not 1 <= i <= instance.n:
                raise PartitionError(f"unknown customer {i}")
            seen[i] = seen.get(i, 0) + 1
    twice = sorted(i for i, k in seen.items() if k > 1)
    missing = sorted(set(instance.customer_ids) - set(seen))
    if twice or missing:
        raise PartitionError(f"customers covered twice: {twice}; uncovered: {missing}")


def expected_recourse_solution(
    routes: Iterable, instance: StochasticInstance, truncation: float = DEFAULT_TRUNCATION
) -> float:
    """Sum of route recourses; the routes must partition the customers."""
    paths = [r.path if isinstance(r, RoutePlan) else tuple(r) for r in routes]
    _check_partition(paths, instance)
    return float(sum(expected_recourse_route(p, instance, truncation) for p in paths))


def recourse_oracle_discrete(path: Sequence[int], instance: StochasticInstance) -> float:
    """Exact expected recourse by enumerating every joint demand scenario.

    Only finite discrete demands are supported.  No truncation is applied.
    """
    path = tuple(path)
    if not path:
        return 0.0
    tables = []
    for d in instance.demands(path):
        if not d.has_finite_support():
            raise TypeError(f"the scenario oracle needs finite support, got {d.family}")
        tables.append(d.to_finite_discrete())
    size = math.prod(len(t.values) for t in tables)
    if size > _ORACLE_LIMIT:
        raise OracleSizeError(f"{size} scenarios exceed the limit {_ORACLE_LIMIT}")
    Q = instance.capacity
    costs = [2.0 * instance.depot_cost(i) for i in path]
    total = 0.0
    for scenario in itertools.product(*(zip(t.values, t.probs) for t in tables)):
        prob = 1.0
        load = 0.0
        paid = 0.0
        for (value, p), c in zip(scenario, costs):
            prob *= p
            before = load
            load += value
            # number of multiples lQ, l >= 1, with before <= lQ < load
            restocks = _count_multiples(before, load, Q)
            paid += restocks * c
        total += prob * paid
    return total


def _count_multiples(before: float, after: float, Q: float) -> int:
    if after <= before:
        return 0
    lo = max(1, math.ceil(before / Q - 1e-12))
    hi = math.ceil(after / Q - 1e-12) - 1
    return max(0, hi - lo + 1)


@dataclass
class RecourseEvaluator:
    """Memoised recourse evaluation for one instance."""

    instance: StochasticInstance
    truncation: float = DEFAULT_TRUNCATION
    _paths: dict = field(default_factory=dict, repr=False)
    _terms: dict = field(default_factory=dict, repr=False)

    def terms(self, ids: Iterable[int]) -> int:
        key = frozenset(ids)
        k = self._terms.get(key)
        if k is None:
            k = restock_terms(self.instance.demands(sorted(key)), self.instance.capacity, self.truncation)
            self._terms[key] = k
        return k

    def path(self, path: Sequence[int]) -> float:
        path = tuple(path)
        v = self._paths.get(path)
        if v is None:
            if not path:
                v = 0.0
            else:
                K = self.terms(path)
                v = float(path_contributions(path, self.instance, self.truncation, K=K).sum())
            self._paths[path] = v
        return v

    def route(self, path: Sequence[int]) -> float:
        path = tuple(path)
        if len(path) <= 1:
            return self.path(path)
        return min(self.path(path), self.path(path[::-1]))

    def orientation(self, path: Sequence[int]) -> tuple[Path, float]:
        path = tuple(path)
        fwd = self.path(path)
        if len(path) <= 1:
            return path, fwd
        bwd = self.path(path[::-1])
        return (path, fwd) if fwd <= bwd else (path[::-1], bwd)

    def solution(self, routes: Iterable[Sequence[int]]) -> float:
        paths = [tuple(r) for r in routes]
        _check_partition(paths, self.instance)
        return float(sum(self.route(p) for p in paths))
