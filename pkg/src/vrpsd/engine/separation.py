"""Separation routines on a master LP point.

Edge values are handled as a symmetric matrix ``X`` of shape
``(n + 1, n + 1)`` with the depot at index 0.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from ..instance import StochasticInstance, _ceil_ratio

__all__ = [
    "SUPPORT_EPS",
    "VIOLATION_TOL",
    "CapacitySeparation",
    "Component",
    "inner_value",
    "support_components",
    "separate_rounded_capacity",
    "analyze_fractional_components",
    "is_integral",
    "extract_routes",
    "enumerate_subpaths",
]

SUPPORT_EPS = 1e-9
VIOLATION_TOL = 1e-6
EXHAUSTIVE_LIMIT = 12


def is_integral(values: np.ndarray, tol: float = 1e-6) -> bool:
    return bool(np.all(np.abs(values - np.round(values)) <= tol))


def inner_value(S: Iterable[int], X: np.ndarray) -> float:
    """``x(E(S))`` for a customer set."""
    idx = np.fromiter(S, dtype=int)
    if idx.size < 2:
        return 0.0
    return float(X[np.ix_(idx, idx)].sum() / 2.0)


@dataclass(frozen=True)
class Component:
    nodes: tuple[int, ...]
    n_edges: int
    is_path: bool
    order: Optional[tuple[int, ...]] = None  # path order when ``is_path``


def support_components(X: np.ndarray, eps: float = SUPPORT_EPS) -> list[tuple[int, ...]]:
    """Connected components of the customer-only support graph."""
    n = X.shape[0] - 1
    seen = np.zeros(n + 1, dtype=bool)
    out = []
    for s in range(1, n + 1):
        if seen[s]:
            continue
        stack, comp = [s], []
        seen[s] = True
        while stack:
            u = stack.pop()
            comp.append(u)
            for v in np.nonzero(X[u, 1:] > eps)[0] + 1:
                if not seen[v]:
                    seen[v] = True
                    stack.append(int(v))
        out.append(tuple(sorted(comp)))
    return out


def analyze_fractional_components(X: np.ndarray, eps: float = SUPPORT_EPS) -> list[Component]:
    """Components with a flag telling whether the support is a simple path.

    A component is flagged when its node count is its non-zero edge count
    plus one and no node has more than two support neighbours; the path
    order then starts at the lower-numbered endpoint.
    """
    out = []
    for comp in support_components(X, eps):
        idx = np.array(comp)
        sub = X[np.ix_(idx, idx)] > eps
        n_edges = int(sub.sum() // 2)
        deg = sub.sum(axis=1)
        is_path = len(comp) == n_edges + 1 and (len(comp) == 1 or deg.max() <= 2)
        order = None
        if is_path:
            if len(comp) == 1:
                order = comp
            else:
                ends = [comp[k] for k in range(len(comp)) if deg[k] == 1]
                start = min(ends)
                order_list = [start]
                prev = None
                cur = start
                while len(order_list) < len(comp):
                    nbrs = [int(v) + 1 for v in np.nonzero(X[cur, 1:] > eps)[0] if int(v) + 1 != prev]
                    prev, cur = cur, nbrs[0]
                    order_list.append(cur)
                order = tuple(order_list)
        out.append(Component(comp, n_edges, is_path, order))
    return out


@dataclass
class CapacitySeparation:
    violated: list[tuple[tuple[int, ...], float]]  # (set, violation), most violated first
    inspected: list[tuple[int, ...]]


def separate_rounded_capacity(
    X: np.ndarray,
    instance: StochasticInstance,
    *,
    max_cuts: int = 50,
    tol: float = VIOLATION_TOL,
    exhaustive_limit: int = EXHAUSTIVE_LIMIT,
) -> CapacitySeparation:
    """Sets with ``x(E(S)) > |S| - ceil(mu(S)/Q) + tol``.

    Small instances are searched exhaustively.  Otherwise the search covers
    the support components, every subset of components with at most
    ``exhaustive_limit`` nodes, and greedy growth from each customer.
    """
    n = instance.n
    mu = instance.means
    Q = instance.capacity
    found: dict[frozenset, float] = {}
    inspected: dict[frozenset, None] = {}

    def consider(S: Sequence[int], xin: Optional[float] = None):
        key = frozenset(S)
        if key in inspected:
            return
        inspected[key] = None
        if xin is None:
            xin = inner_value(S, X)
        k = _ceil_ratio(float(mu[list(S)].sum()), Q)
        viol = xin - (len(S) - k)
        if viol > tol:
            found[key] = viol

    if n <= exhaustive_limit:
        _exhaustive(list(range(1, n + 1)), X, mu, Q, tol, found, inspected)
    else:
        comps = support_components(X)
        for comp in comps:
            consider(comp)
            if len(comp) <= exhaustive_limit:
                _exhaustive(list(comp), X, mu, Q, tol, found, inspected)
        _greedy_growth(X, mu, Q, consider)
    ranked = sorted(found.items(), key=lambda kv: (-kv[1], len(kv[0]), sorted(kv[0])))
    violated = [(tuple(sorted(s)), v) for s, v in ranked[:max_cuts]]
    return CapacitySeparation(violated, [tuple(sorted(s)) for s in inspected])


def _exhaustive(nodes: list[int], X, mu, Q, tol, found, inspected) -> None:
    k = len(nodes)
    if k == 0:
        return
    masks = np.arange(1, 1 << k)
    B = ((masks[:, None] >> np.arange(k)[None, :]) & 1).astype(float)
    sub = X[np.ix_(nodes, nodes)]
    xin = 0.5 * np.einsum("mi,ij,mj->m", B, sub, B)
    load = B @ mu[nodes]
    need = np.ceil(load / Q - 1e-9)
    size = B.sum(axis=1)
    viol = xin - (size - need)
    node_arr = np.array(nodes)
    for r in range(len(masks)):
        S = frozenset(node_arr[B[r] > 0].tolist())
        inspected.setdefault(S, None)
        if viol[r] > tol:
            found[S] = float(viol[r])


def _greedy_growth(X, mu, Q, consider) -> None:
    n = X.shape[0] - 1
    Xc = X[1:, 1:]
    for seed in range(n):
        member = np.zeros(n, dtype=bool)
        member[seed] = True
        conn = Xc[seed].copy()  # x between each node and the current set
        xin = 0.0
        load = float(mu[seed + 1])
        size = 1
        best_slack = -math.inf
        while True:
            cand = np.nonzero((~member) & (conn > SUPPORT_EPS))[0]
            if cand.size == 0:
                break
            # slack after adding j: xin + conn[j] - (size + 1) + ceil((load + mu_j)/Q)
            need = np.ceil((load + mu[cand + 1]) / Q - 1e-9)
            slack = xin + conn[cand] - (size + 1) + need
            j = int(cand[np.argmax(slack)])
            member[j] = True
            xin += conn[j]
            conn += Xc[j]
            load += float(mu[j + 1])
            size += 1
            consider(tuple(int(v) + 1 for v in np.nonzero(member)[0]), xin)
            s = float(slack.max())
            if s < best_slack - 1.0 and size > 3:
                break
            best_slack = max(best_slack, s)


def extract_routes(X: np.ndarray, tol: float = 1e-6) -> tuple[list[tuple[int, ...]], list[tuple[int, ...]]]:
    """Routes and depot-free cycles of an integer edge vector."""
    n = X.shape[0] - 1
    R = np.rint(X).astype(int)
    visited = np.zeros(n + 1, dtype=bool)
    routes = []
    for i in range(1, n + 1):
        if visited[i] or R[0, i] == 0:
            continue
        if R[0, i] == 2:
            visited[i] = True
            routes.append((i,))
            continue
        path = [i]
        visited[i] = True
        prev, cur = 0, i
        while True:
            nxt = [j for j in range(1, n + 1) if R[cur, j] > 0 and j != prev and not visited[j]]
            if not nxt:
                break
            prev, cur = cur, nxt[0]
            visited[cur] = True
            path.append(cur)
        routes.append(tuple(path))
    cycles = []
    for i in range(1, n + 1):
        if visited[i]:
            continue
        comp = [i]
        visited[i] = True
        prev, cur = 0, i
        while True:
            nxt = [j for j in range(1, n + 1) if R[cur, j] > 0 and j != prev and not visited[j]]
            if not nxt:
                break
            prev, cur = cur, nxt[0]
            visited[cur] = True
            comp.append(cur)
        cycles.append(tuple(comp))
    return routes, cycles


def enumerate_subpaths(route: Sequence[int], max_removed: int = 5) -> list[tuple[int, ...]]:
    """Non-empty order-preserving subsequences obtained by removing at most ``max_removed`` customers."""
    route = tuple(route)
    t = len(route)
    out = []
    for k in range(0, min(max_removed, t - 1) + 1):
        for gone in itertools.combinations(range(t), k):
            keep = tuple(route[i] for i in range(t) if i not in gone)
            out.append(keep)
    return out
