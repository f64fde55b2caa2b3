"""Initial incumbent: savings construction followed by local search.

Every move is judged on the true objective, travel cost plus expected
recourse of the best orientation of each route, so the incumbent is
directly comparable with the branch-and-cut value.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ..instance import StochasticInstance
from ..recourse import RecourseEvaluator

__all__ = ["Incumbent", "route_travel", "solution_cost", "heuristic_incumbent", "pack_routes"]

_IMPROVE = 1e-9


@dataclass
class Incumbent:
    routes: list[tuple[int, ...]]
    travel: float
    recourse: float

    @property
    def cost(self) -> float:
        return self.travel + self.recourse


def route_travel(route: Sequence[int], instance: StochasticInstance) -> float:
    nodes = (0, *route, 0)
    c = instance.cost
    return float(sum(c[a, b] for a, b in zip(nodes, nodes[1:])))


def solution_cost(routes, instance: StochasticInstance, ev: RecourseEvaluator) -> tuple[float, float]:
    travel = sum(route_travel(r, instance) for r in routes)
    rec = sum(ev.route(r) for r in routes)
    return float(travel), float(rec)


class _Search:
    def __init__(self, instance: StochasticInstance, ev: RecourseEvaluator, deadline: float):
        self.inst = instance
        self.ev = ev
        self.deadline = deadline
        self.Q = instance.capacity
        self.mu = instance.means
        self._cache: dict = {}

    def cost(self, route: tuple[int, ...]) -> float:
        if not route:
            return 0.0
        v = self._cache.get(route)
        if v is None:
            v = route_travel(route, self.inst) + self.ev.route(route)
            self._cache[route] = v
            self._cache[route[::-1]] = v
        return v

    def load(self, route) -> float:
        return float(sum(self.mu[i] for i in route))

    def fits(self, route) -> bool:
        return self.load(route) <= self.Q + 1e-9

    def expired(self) -> bool:
        return time.perf_counter() > self.deadline

    # --------------------------------------------------------------
    def savings(self, allowed: set[int]) -> list[tuple[int, ...]]:
        inst = self.inst
        routes: list[tuple[int, ...]] = [(i,) for i in inst.customer_ids]
        target_max = max(allowed)
        c = inst.cost
        pairs = []
        for i in inst.customer_ids:
            for j in inst.customer_ids:
                if i < j:
                    pairs.append((c[0, i] + c[0, j] - c[i, j], i, j))
        pairs.sort(key=lambda t: (-t[0], t[1], t[2]))
        for forced in (False, True):
            changed = True
            while changed and not self.expired():
                changed = False
                for _, i, j in pairs:
                    if forced and len(routes) <= target_max:
                        break
                    ri = next(r for r in routes if i in r)
                    rj = next(r for r in routes if j in r)
                    if ri is rj or (ri[0] != i and ri[-1] != i) or (rj[0] != j and rj[-1] != j):
                        continue
                    a = ri if ri[-1] == i else ri[::-1]
                    b = rj if rj[0] == j else rj[::-1]
                    merged = a + b
                    if not self.fits(merged):
                        continue
                    delta = self.cost(merged) - self.cost(ri) - self.cost(rj)
                    if delta < -_IMPROVE or forced:
                        routes = [r for r in routes if r is not ri and r is not rj] + [merged]
                        changed = True
                        if forced:
                            break
            if len(routes) <= target_max:
                break
        return routes

    # --------------------------------------------------------------
    def improve_route(self, r: tuple[int, ...]) -> tuple[int, ...]:
        best = r
        best_c = self.cost(r)
        improved = True
        while improved and not self.expired():
            improved = False
            t = len(best)
            for a in range(t - 1):
                for b in range(a + 1, t):
                    cand = best[:a] + best[a : b + 1][::-1] + best[b + 1 :]
                    cc = self.cost(cand)
                    if cc < best_c - _IMPROVE:
                        best, best_c, improved = cand, cc, True
            for a in range(t):
                rest = best[:a] + best[a + 1 :]
                for p in range(len(rest) + 1):
                    cand = rest[:p] + (best[a],) + rest[p:]
                    cc = self.cost(cand)
                    if cc < best_c - _IMPROVE:
                        best, best_c, improved = cand, cc, True
                        break
                if improved:
                    break
        return best

    def local_search(self, routes: list[tuple[int, ...]], allowed: set[int]) -> list[tuple[int, ...]]:
        routes = [self.improve_route(r) for r in routes if r]
        improved = True
        while improved and not self.expired():
            improved = False
            # relocate one customer to another (possibly new) route
            k = len(routes)
            for a in range(k):
                for pos in range(len(routes[a])):
                    cust = routes[a][pos]
                    src = routes[a][:pos] + routes[a][pos + 1 :]
                    if not src and (k - 1) not in allowed:
                        continue
                    base = self.cost(routes[a])
                    targets = list(range(k)) + ([k] if (k + 1) in allowed else [])
                    for b in targets:
                        if b == a:
                            continue
                        dst_route = routes[b] if b < k else ()
                        if self.load(dst_route) + self.mu[cust] > self.Q + 1e-9:
                            continue
                        old = base + self.cost(dst_route)
                        for p in range(len(dst_route) + 1):
                            dst = dst_route[:p] + (cust,) + dst_route[p:]
                            new = self.cost(src) + self.cost(dst)
                            if new < old - _IMPROVE:
                                routes = [r for idx, r in enumerate(routes) if idx not in (a, b)]
                                routes += [x for x in (src, dst) if x]
                                improved = True
                                break
                        if improved:
                            break
                    if improved:
                        break
                if improved:
                    break
            if improved:
                continue
            # swap two customers of different routes
            for a in range(k):
                for b in range(a + 1, k):
                    ra, rb = routes[a], routes[b]
                    old = self.cost(ra) + self.cost(rb)
                    for p in range(len(ra)):
                        for q in range(len(rb)):
                            na = ra[:p] + (rb[q],) + ra[p + 1 :]
                            nb = rb[:q] + (ra[p],) + rb[q + 1 :]
                            if not (self.fits(na) and self.fits(nb)):
                                continue
                            if self.cost(na) + self.cost(nb) < old - _IMPROVE:
                                routes = [r for idx, r in enumerate(routes) if idx not in (a, b)] + [na, nb]
                                improved = True
                                break
                        if improved:
                            break
                    if improved:
                        break
                if improved:
                    break
            if improved:
                routes = [self.improve_route(r) for r in routes]
        return routes


def pack_routes(instance: StochasticInstance, m: int, *, tries: int = 200, seed: int = 0) -> Optional[list[tuple[int, ...]]]:
    """Assign customers to exactly ``m`` non-empty routes respecting expected capacity."""
    mu = instance.means
    Q = instance.capacity
    ids = list(instance.customer_ids)
    if m > len(ids):
        return None
    rng = np.random.default_rng(seed)
    order = sorted(ids, key=lambda i: (-mu[i], i))
    for t in range(tries):
        if t > 0:
            order = list(rng.permutation(ids))
        bins: list[list[int]] = [[] for _ in range(m)]
        loads = [0.0] * m
        ok = True
        for i in order:
            # best fit among bins that can take it; empty bins first when needed
            empties = [b for b in range(m) if not bins[b]]
            remaining = len([j for j in order if not any(j in bb for bb in bins)])
            if empties and remaining <= len(empties):
                b = empties[0]
            else:
                cand = [b for b in range(m) if loads[b] + mu[i] <= Q + 1e-9]
                if not cand:
                    ok = False
                    break
                b = min(cand, key=lambda b: (Q - loads[b] - mu[i], b))
            bins[b].append(i)
            loads[b] += mu[i]
        if ok and all(bins):
            c = instance.cost
            out = []
            for b in bins:
                # nearest-neighbour order from the depot
                rest, cur, route = set(b), 0, []
                while rest:
                    nxt = min(rest, key=lambda j: (c[cur, j], j))
                    route.append(nxt)
                    rest.remove(nxt)
                    cur = nxt
                out.append(tuple(route))
            return out
    return None


def heuristic_incumbent(
    instance: StochasticInstance,
    evaluator: Optional[RecourseEvaluator] = None,
    *,
    time_budget: float = 10.0,
    seed: int = 0,
) -> Optional[Incumbent]:
    """Feasible solution with a fleet size in ``instance.fleet_sizes``, or ``None``."""
    ev = evaluator or RecourseEvaluator(instance)
    search = _Search(instance, ev, time.perf_counter() + time_budget)
    allowed = set(instance.fleet_sizes)
    candidates = []
    routes = search.savings(allowed)
    if len(routes) in allowed:
        candidates.append(routes)
    for m in sorted(allowed):
        if len(candidates) >= 2:
            break
        packed = pack_routes(instance, m, seed=seed)
        if packed is not None:
            candidates.append(packed)
    best: Optional[Incumbent] = None
    for routes in candidates:
        routes = search.local_search(routes, allowed)
        if len(routes) not in allowed:
            continue
        travel, rec = solution_cost(routes, instance, ev)
        inc = Incumbent([ev.orientation(r)[0] for r in routes], travel, rec)
        if best is None or inc.cost < best.cost - _IMPROVE:
            best = inc
    return best
