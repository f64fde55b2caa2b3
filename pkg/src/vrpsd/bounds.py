"""Lower bounds on the expected recourse of a customer set.

* :func:`l1_single_route`: the farthest-first ordering is optimal for one
  vehicle when the set is monotone, so its recourse is exact.
* :func:`l2_dp`: a stage-wise dynamic program over integer units of
  expected demand (tables ``G``) combined over vehicles (table ``H``).
* :func:`l3_set_covering`: linear relaxation of an exact-``m`` covering
  model over capacity-feasible paths, priced by the ``G`` recursion.
* :func:`lsg18_bound`: one big vehicle of capacity ``mQ`` whose ``l``-th
  failure is charged at the ``l``-th closest customer.

All bounds use the same restock truncation rule as :mod:`vrpsd.recourse`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .instance import StochasticInstance
from .lp import INF, HighsLP, LPBackend, make_lp
from .monotonicity import certify_family, check_condition_enumerative
from .recourse import DEFAULT_TRUNCATION, _MAX_RESTOCKS, _ZERO_MASS, expected_recourse_path
from .stochastic import Normal, Poisson, _normal_cdf, _poisson_cdf, sum_of

__all__ = [
    "BoundDomainError",
    "MonotonicityRequired",
    "CoveringInfeasible",
    "farthest_first",
    "l1_single_route",
    "VarianceTable",
    "GTable",
    "build_g_table",
    "l2_dp",
    "ColumnPool",
    "L3Result",
    "solve_l3",
    "l3_set_covering",
    "lsg18_bound",
    "fleet_lb_vector",
]

_EPS = 1e-9


class BoundDomainError(ValueError):
    """The bound is not defined for these inputs."""


class MonotonicityRequired(BoundDomainError):
    """The bound relies on the monotonicity condition, which was not shown."""


class CoveringInfeasible(RuntimeError):
    """The covering relaxation needs its artificial column."""


def farthest_first(S: Iterable[int], instance: StochasticInstance) -> tuple[int, ...]:
    """Customers by non-increasing depot cost, ties by ascending id."""
    return tuple(sorted(set(S), key=lambda i: (-instance.cost[0, i], i)))


def _require_monotone(ids, instance) -> None:
    if certify_family(ids, instance).is_monotone:
        return
    if len(ids) <= 8 and check_condition_enumerative(ids, instance).is_monotone:
        return
    raise MonotonicityRequired(
        f"set {sorted(ids)} is not certified monotone; the sorted route need not be optimal"
    )


def l1_single_route(
    S: Iterable[int],
    instance: StochasticInstance,
    truncation: float = DEFAULT_TRUNCATION,
    *,
    check: bool = True,
) -> float:
    """Recourse of the farthest-first route through ``S``."""
    ids = set(S)
    if instance.load(ids) > instance.capacity + _EPS:
        raise BoundDomainError("expected demand exceeds capacity; use l2_dp or l3_set_covering")
    if check:
        _require_monotone(sorted(ids), instance)
    return expected_recourse_path(farthest_first(ids, instance), instance, truncation)


# ----------------------------------------------------------------------
# dynamic program


def _integer_units(ids: Sequence[int], instance: StochasticInstance) -> tuple[list[int], int]:
    mus = []
    for i in ids:
        d = instance.demand(i)
        if not isinstance(d, (Poisson, Normal)):
            raise BoundDomainError(f"the dynamic program supports Poisson or Normal demands, not {d.family}")
        m = d.mean
        if abs(m - round(m)) > _EPS or m <= 0:
            raise BoundDomainError(f"customer {i} has non-integer expected demand {m}")
        mus.append(int(round(m)))
    Q = instance.capacity
    if abs(Q - round(Q)) > _EPS:
        raise BoundDomainError("the dynamic program needs an integer capacity")
    families = {type(instance.demand(i)) for i in ids}
    if len(families) > 1:
        raise BoundDomainError("the dynamic program needs a single demand family")
    return mus, int(round(Q))


@dataclass
class VarianceTable:
    """``var[h][q]``: least variance of a subset of stages ``h..`` with total mean ``q``."""

    var: np.ndarray  # shape (|S| + 1, Q + 1); row |S| is the empty suffix

    @classmethod
    def build(cls, mus: Sequence[int], variances: Sequence[float], Q: int) -> "VarianceTable":
        s = len(mus)
        var = np.full((s + 1, Q + 1), np.inf)
        var[s, 0] = 0.0
        for h in range(s - 1, -1, -1):
            row = var[h + 1].copy()
            mu = mus[h]
            if mu <= Q:
                cand = np.full(Q + 1, np.inf)
                cand[mu:] = var[h + 1, : Q + 1 - mu] + variances[h]
                row = np.minimum(row, cand)
            var[h] = row
        return cls(var)


@dataclass
class GTable:
    """Least recourse of a single vehicle carrying ``q`` units from a suffix.

    ``values[h, q]`` covers the customers ``order[h:]`` (0-based stage
    ``h``); ``order`` lists the customers by non-decreasing depot cost.
    Values use the restock count ``K(q)`` of a total demand with mean ``q``.
    """

    order: tuple[int, ...]
    mus: tuple[int, ...]
    Q: int
    values: np.ndarray  # (|S| + 1, Q + 1)
    K: np.ndarray  # (Q + 1,) restock terms per load
    take: dict = field(default_factory=dict, repr=False)  # K -> bool array (|S|, Q + 1)
    tables: dict = field(default_factory=dict, repr=False)  # K -> value array

    def stage(self, h: int) -> np.ndarray:
        return self.values[h]

    def best_subset(self, h: int, q: int) -> tuple[int, ...]:
        """Customers chosen by the optimal policy for state ``(h, q)``."""
        K = int(self.K[q])
        take = self.take[K]
        chosen = []
        for stage in range(h, len(self.order)):
            if q > 0 and take[stage, q]:
                chosen.append(self.order[stage])
                q -= self.mus[stage]
        if q != 0:
            raise RuntimeError("backtracking did not reach an empty load")
        return tuple(chosen)


def _cdf_table(family, q_grid: np.ndarray, var_grid: Optional[np.ndarray], thresholds: np.ndarray) -> np.ndarray:
    """``A[q] = sum_l F_q(l Q)`` for the loads ``q_grid``."""
    if family is Poisson:
        F = _poisson_cdf(q_grid[:, None].astype(float), thresholds[None, :])
    else:
        F = _normal_cdf(q_grid[:, None].astype(float), var_grid[:, None], thresholds[None, :])
    return np.asarray(F, dtype=float).reshape(len(q_grid), len(thresholds)).sum(axis=1)


def _restock_counts(family, Q: int, var0: Optional[np.ndarray], truncation: float) -> np.ndarray:
    """Restock terms ``K(q)`` kept by a route whose total demand has mean ``q``."""
    K = np.zeros(Q + 1, dtype=int)
    qs = np.arange(Q + 1, dtype=float)
    for q in range(1, Q + 1):
        k = 0
        while k < _MAX_RESTOCKS:
            t = (k + 1) * Q
            if family is Poisson:
                F = float(_poisson_cdf(qs[q], t))
            else:
                v = var0[q]
                if not np.isfinite(v):
                    break
                F = float(_normal_cdf(qs[q], v, t))
            surv = 1.0 - F
            if surv <= _ZERO_MASS or surv < truncation:
                break
            k += 1
        K[q] = k
    return K


def build_g_table(
    S: Iterable[int],
    instance: StochasticInstance,
    duals: Optional[dict] = None,
    truncation: float = DEFAULT_TRUNCATION,
) -> GTable:
    """Fill the single-vehicle tables, optionally subtracting customer duals.

    Stage ``h`` decides whether customer ``order[h]`` joins the vehicle.
    Farther customers are decided first (they are visited first), so the
    demand already on board when ``order[h]`` is served is the load of the
    later stages.
    """
    order = tuple(sorted(set(S), key=lambda i: (instance.cost[0, i], i)))
    mus, Q = _integer_units(order, instance)
    s = len(order)
    family = type(instance.demand(order[0])) if order else Poisson
    if family is Normal:
        variances = [instance.demand(i).var for i in order]
        vt = VarianceTable.build(mus, variances, Q).var
    else:
        vt = None
    qs = np.arange(Q + 1)
    K_of_q = _restock_counts(family, Q, None if vt is None else vt[0], truncation)
    costs = 2.0 * instance.cost[0, list(order)] if order else np.zeros(0)
    pi = np.array([0.0 if duals is None else float(duals.get(i, 0.0)) for i in order])

    tables, takes = {}, {}
    for K in sorted(set(K_of_q.tolist())):
        thresholds = Q * np.arange(1, K + 1, dtype=float)
        G = np.full((s + 1, Q + 1), np.inf)
        G[s, 0] = 0.0
        take = np.zeros((s, Q + 1), dtype=bool)
        if family is Poisson:
            A = _cdf_table(Poisson, qs, None, thresholds) if K else np.zeros(Q + 1)
        for h in range(s - 1, -1, -1):
            mu = mus[h]
            nxt = G[h + 1]
            row = nxt.copy()
            if mu <= Q:
                if K == 0:
                    step = np.zeros(Q + 1 - mu)
                elif family is Poisson:
                    step = A[: Q + 1 - mu] - A[mu:]
                else:
                    prefix_var = vt[h + 1, : Q + 1 - mu]
                    total_var = vt[h, mu:]
                    ok = np.isfinite(prefix_var) & np.isfinite(total_var)
                    pv = np.where(ok, prefix_var, 0.0)
                    tv = np.where(ok, total_var, 0.0)
                    Ap = _cdf_table(Normal, qs[: Q + 1 - mu], pv, thresholds)
                    At = _cdf_table(Normal, qs[mu:], tv, thresholds)
                    step = np.where(ok, Ap - At, np.inf)
                step = np.maximum(step, 0.0)
                cand = nxt[: Q + 1 - mu] + costs[h] * step - pi[h]
                better = cand < row[mu:]
                row[mu:] = np.where(better, cand, row[mu:])
                take[h, mu:] = better
            G[h] = row
        tables[K] = G
        takes[K] = take
    values = np.empty((s + 1, Q + 1))
    for q in range(Q + 1):
        values[:, q] = tables[int(K_of_q[q])][:, q]
    return GTable(order, tuple(mus), Q, values, K_of_q, takes, tables)


def l2_dp(
    S: Iterable[int],
    m: int,
    instance: StochasticInstance,
    truncation: float = DEFAULT_TRUNCATION,
    *,
    table: Optional[GTable] = None,
) -> float:
    """Least-cost assignment of the expected demand of ``S`` to ``m`` vehicles.

    Vehicle ``k`` may only use customers from the ``k``-th closest onward.
    Returns ``inf`` when ``m`` vehicles cannot carry the expected demand.
    """
    if m < 1:
        raise BoundDomainError("m must be at least 1")
    ids = sorted(set(S))
    if not ids:
        return 0.0
    g = table if table is not None else build_g_table(ids, instance, truncation=truncation)
    Q = g.Q
    D = int(sum(g.mus))
    if D > m * Q:
        return math.inf
    s = len(ids)
    H = np.full(D + 1, np.inf)
    H[: min(D, Q) + 1] = g.values[0, : min(D, Q) + 1]
    for k in range(2, m + 1):
        gk = g.values[k - 1] if k - 1 < s else np.where(np.arange(Q + 1) == 0, 0.0, np.inf)
        newH = np.full(D + 1, np.inf)
        for q in range(D + 1):
            x_hi = min(q, Q)
            cand = gk[: x_hi + 1] + H[q - np.arange(x_hi + 1)]
            newH[q] = cand.min()
        H = newH
    v = float(H[D])
    return max(v, 0.0) if math.isfinite(v) else math.inf


# ----------------------------------------------------------------------
# set covering


@dataclass
class ColumnPool:
    columns: list[tuple[int, ...]] = field(default_factory=list)
    costs: list[float] = field(default_factory=list)
    index: dict = field(default_factory=dict)
    cover_duals: dict = field(default_factory=dict)
    cardinality_dual: float = 0.0

    def add(self, path: tuple[int, ...], cost: float) -> bool:
        key = frozenset(path)
        if key in self.index:
            return False
        self.index[key] = len(self.columns)
        self.columns.append(tuple(path))
        self.costs.append(float(cost))
        return True

    def coverage(self, i: int) -> list[int]:
        return [k for k, p in enumerate(self.columns) if i in p]


@dataclass
class L3Result:
    value: float
    lp_value: float
    min_reduced_cost: float
    iterations: int
    pool: ColumnPool
    solution: dict  # column index -> value


def _greedy_partition(ids, instance, m) -> list[tuple[int, ...]]:
    """Best-fit-decreasing packing into at most ``m`` capacity-feasible bins."""
    bins: list[list[int]] = []
    loads: list[float] = []
    Q = instance.capacity
    for i in sorted(ids, key=lambda i: (-instance.means[i], i)):
        mu = instance.means[i]
        best = None
        for b in range(len(bins)):
            if loads[b] + mu <= Q + _EPS and (best is None or loads[b] > loads[best]):
                best = b
        if best is None:
            bins.append([i])
            loads.append(mu)
        else:
            bins[best].append(i)
            loads[best] += mu
    return [tuple(b) for b in bins] if len(bins) <= m else []


def solve_l3(
    S: Iterable[int],
    m: int,
    instance: StochasticInstance,
    truncation: float = DEFAULT_TRUNCATION,
    *,
    max_iterations: int = 10_000,
    columns_per_round: int = 20,
    tolerance: float = 1e-9,
    backend: str = "highs",
) -> L3Result:
    """Column generation for the covering relaxation with exactly ``m`` paths.

    Path weights are only bounded below.  Upper bounds of one would leave
    pooled columns with negative reduced cost at their bound, and the
    pricing step could then no longer certify convergence.
    """
    ids = sorted(set(S))
    if not ids:
        return L3Result(0.0, 0.0, 0.0, 0, ColumnPool(), {})
    if m > len(ids):
        raise BoundDomainError(f"cannot use {m} non-empty paths for {len(ids)} customers")
    if instance.min_vehicles(ids) > m:
        raise BoundDomainError(f"{m} vehicles cannot carry the expected demand of the set")
    _integer_units(ids, instance)
    cost_of = lambda sub: expected_recourse_path(farthest_first(sub, instance), instance, truncation)

    pool = ColumnPool()
    lp: LPBackend = make_lp(backend)
    cover_rows = {i: lp.add_row([], [], 1.0, INF) for i in ids}
    card_row = lp.add_row([], [], float(m), float(m))
    col_ids: list[int] = []

    def add_column(sub: tuple[int, ...], cost: float) -> bool:
        sub = farthest_first(sub, instance)
        if not pool.add(sub, cost):
            return False
        rows = [cover_rows[i] for i in sub] + [card_row]
        col_ids.append(lp.add_col(cost, 0.0, INF, rows, [1.0] * len(rows)))
        return True

    big_m = 1.0 + 10.0 * sum(2.0 * instance.cost[0, i] for i in ids) * max(1, len(ids))
    # artificial column: covers everything and counts for any number of paths
    art = lp.add_col(big_m, 0.0, INF, [cover_rows[i] for i in ids] + [card_row], [1.0] * len(ids) + [1.0])
    for i in ids:
        add_column((i,), cost_of((i,)))
    for sub in _greedy_partition(ids, instance, m):
        add_column(sub, cost_of(sub))

    it = 0
    min_rc = -math.inf
    while True:
        it += 1
        res = lp.solve()
        if not res.optimal:
            raise CoveringInfeasible(f"restricted master returned {res.status}")
        duals = {i: float(res.row_duals[r]) for i, r in cover_rows.items()}
        sigma = float(res.row_duals[card_row])
        g = build_g_table(ids, instance, duals=duals, truncation=truncation)
        values = g.values[0].copy()
        values[0] = np.inf
        min_rc = float(values.min() - sigma) if np.isfinite(values.min()) else math.inf
        if min_rc >= -tolerance or it >= max_iterations:
            break
        added = 0
        for q in np.argsort(values, kind="stable"):
            if added >= columns_per_round or values[q] - sigma >= -tolerance:
                break
            sub = g.best_subset(0, int(q))
            if add_column(sub, cost_of(sub)):
                added += 1
        if added == 0:
            break
    pool.cover_duals = duals
    pool.cardinality_dual = sigma
    x = res.x
    if x[art] > 1e-7:
        raise CoveringInfeasible("the covering relaxation is infeasible without the artificial column")
    sol = {k: float(x[c]) for k, c in enumerate(col_ids) if x[c] > 1e-12}
    value = res.objective + m * min(0.0, min_rc if math.isfinite(min_rc) else 0.0)
    return L3Result(max(0.0, value), res.objective, min_rc, it, pool, sol)


def l3_set_covering(
    S: Iterable[int], m: int, instance: StochasticInstance, truncation: float = DEFAULT_TRUNCATION, **kwargs
) -> float:
    """Value of the covering relaxation at column-generation convergence."""
    return solve_l3(S, m, instance, truncation, **kwargs).value


def lsg18_bound(
    S: Iterable[int], m: int, instance: StochasticInstance, truncation: float = DEFAULT_TRUNCATION
) -> float:
    """Single vehicle of capacity ``mQ``; the ``l``-th failure costs the ``l``-th closest round trip."""
    ids = sorted(set(S))
    if not ids:
        return 0.0
    c = np.sort(instance.cost[0, ids])
    total = sum_of(instance.demands(ids), coerce=True)
    cap = m * instance.capacity
    value = 0.0
    for l in range(1, len(ids) + 1):
        surv = 1.0 - float(total.cdf(l * cap))
        if surv <= _ZERO_MASS or surv < truncation:
            break
        value += 2.0 * surv * c[l - 1]
    return value


def fleet_lb_vector(
    instance: StochasticInstance, truncation: float = DEFAULT_TRUNCATION, **kwargs
) -> dict[int, float]:
    """``L_m`` for every admissible fleet size (covering bound over all customers).

    The vector is non-increasing in ``m`` in exact arithmetic, so once a
    value reaches zero the larger sizes are set to zero without solving.
    """
    ids = instance.customer_ids
    out: dict[int, float] = {}
    zero = False
    for m in sorted(instance.fleet_sizes):
        if zero or m > len(ids):
            out[m] = 0.0
            continue
        if instance.min_vehicles(ids) > m:
            out[m] = math.inf
            continue
        try:
            v = l3_set_covering(ids, m, instance, truncation, **kwargs)
        except CoveringInfeasible:
            out[m] = math.inf
            continue
        out[m] = v
        zero = v <= 1e-9
    return out
