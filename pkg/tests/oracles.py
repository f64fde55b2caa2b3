"""Independent brute-force reference computations used by the tests."""

from __future__ import annotations

import itertools
import math
from functools import lru_cache
from typing import Iterable, Iterator, Sequence

import numpy as np

from vrpsd.instance import StochasticInstance
from vrpsd.recourse import best_orientation, expected_recourse_path, path_contributions


def set_partitions(items: Sequence[int]) -> Iterator[list[tuple[int, ...]]]:
    """Every partition of ``items`` into non-empty blocks."""
    items = list(items)
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in set_partitions(rest):
        yield [(first,)] + part
        for k in range(len(part)):
            yield part[:k] + [(first,) + part[k]] + part[k + 1 :]


def min_permutation_recourse(block: Iterable[int], instance: StochasticInstance, truncation: float = 1e-4) -> float:
    block = tuple(block)
    return min(expected_recourse_path(p, instance, truncation) for p in itertools.permutations(block))


def partition_oracle(S: Iterable[int], m: int, instance: StochasticInstance, truncation: float = 1e-4) -> float:
    """Least total recourse over partitions of ``S`` into exactly ``m`` feasible ordered paths."""
    S = sorted(set(S))
    Q = instance.capacity
    memo: dict = {}

    def cost(block):
        key = frozenset(block)
        if key not in memo:
            memo[key] = min_permutation_recourse(block, instance, truncation)
        return memo[key]

    best = math.inf
    for part in set_partitions(S):
        if len(part) != m:
            continue
        if any(instance.load(b) > Q + 1e-9 for b in part):
            continue
        best = min(best, sum(cost(b) for b in part))
    return best


def route_travel(path: Sequence[int], instance: StochasticInstance) -> float:
    c = instance.cost
    nodes = (0, *path, 0)
    return float(sum(c[a, b] for a, b in zip(nodes, nodes[1:])))


def best_route(block: Sequence[int], instance: StochasticInstance, truncation: float = 1e-4):
    """Cheapest ordering of a block: travel plus recourse, over all permutations."""
    best, arg = math.inf, None
    for p in itertools.permutations(block):
        if len(p) > 1 and p[0] > p[-1]:
            continue  # reversal has the same travel; recourse handled below
        travel = route_travel(p, instance)
        rec = expected_recourse_path(p, instance, truncation)
        if len(p) > 1:
            rec = min(rec, expected_recourse_path(p[::-1], instance, truncation))
        if travel + rec < best:
            best, arg = travel + rec, p
    return best, arg


def solve_brute_force(instance: StochasticInstance, truncation: float = 1e-4):
    """Optimal VRPSD value by enumerating partitions, orders and orientations."""
    Q = instance.capacity
    memo: dict = {}
    best, best_part = math.inf, None
    fleet = set(instance.fleet_sizes)
    for part in set_partitions(instance.customer_ids):
        if len(part) not in fleet:
            continue
        if any(instance.load(b) > Q + 1e-9 for b in part):
            continue
        total = 0.0
        routes = []
        for b in part:
            key = frozenset(b)
            if key not in memo:
                memo[key] = best_route(b, instance, truncation)
            v, r = memo[key]
            total += v
            routes.append(r)
            if total >= best:
                break
        else:
            if total < best:
                best, best_part = total, routes
    return best, best_part


def enumerate_solutions(instance: StochasticInstance, *, feasible_only: bool = True) -> Iterator[list[tuple[int, ...]]]:
    """Every set of routes covering all customers, one direction per route."""
    Q = instance.capacity
    for part in set_partitions(instance.customer_ids):
        if feasible_only and any(instance.load(b) > Q + 1e-9 for b in part):
            continue
        if len(part) not in instance.fleet_sizes and feasible_only:
            continue
        orders = []
        for b in part:
            orders.append([p for p in itertools.permutations(b) if len(p) == 1 or p[0] < p[-1]])
        for combo in itertools.product(*orders):
            yield list(combo)


def solution_values(routes, instance: StochasticInstance, truncation: float = 1e-4) -> dict:
    """Master variables of an integer solution, with theta set to the route contributions."""
    n = instance.n
    vals: dict = {}
    for i in range(n + 1):
        for j in range(i + 1, n + 1):
            vals[("x", i, j)] = 0.0
    theta = {i: 0.0 for i in instance.customer_ids}
    for r in routes:
        nodes = (0, *r, 0)
        for a, b in zip(nodes, nodes[1:]):
            key = ("x", min(a, b), max(a, b))
            vals[key] += 1.0
        path, _ = best_orientation(r, instance, truncation)
        for i, v in zip(path, path_contributions(path, instance, truncation)):
            theta[i] = float(v)
    for i, v in theta.items():
        vals[("theta", i)] = v
    for m in instance.fleet_sizes:
        vals[("z", m)] = 1.0 if m == len(routes) else 0.0
    return vals
