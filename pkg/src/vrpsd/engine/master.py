"""The relaxed master problem held in one persistent LP."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional

import numpy as np

from ..cuts import CutPool, LinearCut, edge
from ..instance import StochasticInstance
from ..lp import INF, LPBackend, LPResult, make_lp

__all__ = ["MasterModel", "MasterSolution", "build_master"]


@dataclass
class MasterSolution:
    """LP point split into its variable blocks."""

    objective: float
    X: np.ndarray  # symmetric (n+1, n+1) edge values
    theta: np.ndarray  # (n+1,), entry 0 unused
    z: dict  # fleet size -> value
    raw: np.ndarray

    def values(self) -> dict:
        """Variable-name map suitable for :func:`vrpsd.cuts.cut_violation`."""
        n = len(self.theta) - 1
        out: dict = {}
        for i in range(n + 1):
            for j in range(i + 1, n + 1):
                out[("x", i, j)] = float(self.X[i, j])
        for i in range(1, n + 1):
            out[("theta", i)] = float(self.theta[i])
        for m, v in self.z.items():
            out[("z", m)] = float(v)
        return out


class MasterModel:
    """Edge, recourse and fleet variables with the structural rows.

    Customer edges live in ``[0, 1]``, depot edges in ``[0, 2]``, recourse
    shares are non-negative and fleet indicators lie in ``[0, 1]``.  Cuts
    are appended as global rows; branching only changes column bounds.
    """

    def __init__(self, instance: StochasticInstance, backend: str = "highs"):
        self.instance = instance
        n = instance.n
        self.n = n
        self.lp: LPBackend = make_lp(backend)
        self.edges: list[tuple[int, int]] = [(i, j) for i in range(n + 1) for j in range(i + 1, n + 1)]
        costs = [float(instance.cost[i, j]) for i, j in self.edges]
        lbs = [0.0] * len(self.edges)
        ubs = [2.0 if i == 0 else 1.0 for i, _ in self.edges]
        self.edge_cols = self.lp.add_cols(costs, lbs, ubs)
        self.col_of: dict = {("x", i, j): c for (i, j), c in zip(self.edges, self.edge_cols)}
        self.theta_cols = self.lp.add_cols([1.0] * n, [0.0] * n, [INF] * n)
        for i, c in zip(range(1, n + 1), self.theta_cols):
            self.col_of[("theta", i)] = c
        self.fleet = list(instance.fleet_sizes)
        self.z_cols = self.lp.add_cols([0.0] * len(self.fleet), [0.0] * len(self.fleet), [1.0] * len(self.fleet))
        for m, c in zip(self.fleet, self.z_cols):
            self.col_of[("z", m)] = c
        self.root_bounds = {c: (0.0, 2.0 if i == 0 else 1.0) for (i, _), c in zip(self.edges, self.edge_cols)}
        self.root_bounds.update({c: (0.0, INF) for c in self.theta_cols})
        self.root_bounds.update({c: (0.0, 1.0) for c in self.z_cols})
        self._current_bounds = dict(self.root_bounds)
        self.edge_index = np.zeros((n + 1, n + 1), dtype=int)
        for (i, j), c in zip(self.edges, self.edge_cols):
            self.edge_index[i, j] = self.edge_index[j, i] = c

        # depot degree: sum x_0i - sum 2 m z_m = 0
        depot = [self.col_of[("x", 0, i)] for i in range(1, n + 1)]
        self.lp.add_row(depot + self.z_cols, [1.0] * n + [-2.0 * m for m in self.fleet], 0.0, 0.0)
        # customer degree
        for h in range(1, n + 1):
            cols = [self.col_of[edge(h, k)] for k in range(n + 1) if k != h]
            self.lp.add_row(cols, [1.0] * len(cols), 2.0, 2.0)
        # one fleet size
        self.lp.add_row(self.z_cols, [1.0] * len(self.z_cols), 1.0, 1.0)
        self.structural_rows = n + 2
        self.pool = CutPool()
        self.cut_rows: list[int] = []

    # ------------------------------------------------------------------
    def add_cut(self, cut: LinearCut) -> bool:
        if not self.pool.add(cut):
            return False
        cols, vals = [], []
        for k, v in cut.terms.items():
            if v == 0.0:
                continue
            if k not in self.col_of:
                raise KeyError(f"cut references undeclared variable {k!r}")
            cols.append(self.col_of[k])
            vals.append(v)
        if cut.sense == ">=":
            row = self.lp.add_row(cols, vals, cut.rhs, INF)
        else:
            row = self.lp.add_row(cols, vals, -INF, cut.rhs)
        self.cut_rows.append(row)
        return True

    def set_bounds(self, fixings: Mapping[int, tuple[float, float]]) -> None:
        """Apply root bounds overridden by ``fixings`` (column -> (lb, ub))."""
        target = dict(self.root_bounds)
        target.update(fixings)
        changed = [c for c, b in target.items() if self._current_bounds.get(c) != b]
        if changed:
            self.lp.set_col_bounds(changed, [target[c][0] for c in changed], [target[c][1] for c in changed])
            for c in changed:
                self._current_bounds[c] = target[c]

    def solve(self) -> tuple[LPResult, Optional[MasterSolution]]:
        res = self.lp.solve()
        if not res.optimal:
            return res, None
        return res, self.split(res)

    def split(self, res: LPResult) -> MasterSolution:
        x = res.x
        n = self.n
        X = np.zeros((n + 1, n + 1))
        vals = x[self.edge_cols]
        for (i, j), v in zip(self.edges, vals):
            X[i, j] = X[j, i] = v
        theta = np.zeros(n + 1)
        theta[1:] = x[self.theta_cols]
        z = {m: float(x[c]) for m, c in zip(self.fleet, self.z_cols)}
        return MasterSolution(res.objective, X, theta, z, x)

    def fix_solution(self, routes: Iterable[tuple[int, ...]], m: int) -> dict:
        """Column bounds pinning every edge and fleet variable to a solution."""
        n = self.n
        X = np.zeros((n + 1, n + 1))
        for r in routes:
            nodes = (0, *r, 0)
            for a, b in zip(nodes, nodes[1:]):
                X[a, b] += 1
                if a != b:
                    X[b, a] += 1
        fix = {}
        for (i, j), c in zip(self.edges, self.edge_cols):
            v = X[i, j]
            fix[c] = (v, v)
        for mm, c in zip(self.fleet, self.z_cols):
            v = 1.0 if mm == m else 0.0
            fix[c] = (v, v)
        return fix


def build_master(instance: StochasticInstance, fleet_bounds: Optional[Mapping[int, float]] = None, backend: str = "highs") -> MasterModel:
    """Master model with structural rows and, if given, the fleet bound row."""
    from ..cuts import fleet_cut

    model = MasterModel(instance, backend)
    if fleet_bounds is not None:
        model.add_cut(fleet_cut(fleet_bounds, instance))
        for m, v in fleet_bounds.items():
            if not math.isfinite(v):
                c = model.col_of[("z", m)]
                model.root_bounds[c] = (0.0, 0.0)
        model.set_bounds({})
    return model
