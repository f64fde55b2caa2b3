"""A small linear-programming oracle used by the bounds and the solver.

The interface is deliberately narrow: add columns and rows, change column
bounds, solve, and read primal values and row duals.  Duals follow the
usual minimisation convention: a binding ``>=`` row has a non-negative
dual.  :class:`HighsLP` keeps one persistent model so that successive
solves are warm-started; :class:`ScipyLP` rebuilds the problem on each
call and exists as an independent reference.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

__all__ = ["INF", "LPStatus", "LPResult", "LPBackend", "HighsLP", "ScipyLP", "LPError", "make_lp"]

INF = math.inf


class LPError(RuntimeError):
    """The backend failed to return a usable answer."""


class LPStatus:
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    ERROR = "error"


@dataclass
class LPResult:
    status: str
    objective: float
    x: np.ndarray
    row_duals: np.ndarray

    @property
    def optimal(self) -> bool:
        return self.status == LPStatus.OPTIMAL


class LPBackend:
    """Abstract minimisation LP ``min c'x  s.t. lo <= Ax <= hi, l <= x <= u``."""

    def add_col(self, cost: float, lb: float, ub: float, rows: Sequence[int] = (), vals: Sequence[float] = ()) -> int:
        raise NotImplementedError

    def add_cols(self, costs, lbs, ubs) -> list[int]:
        return [self.add_col(c, l, u) for c, l, u in zip(costs, lbs, ubs)]

    def add_row(self, cols: Sequence[int], vals: Sequence[float], lb: float, ub: float) -> int:
        raise NotImplementedError

    def set_col_bounds(self, cols: Sequence[int], lbs: Sequence[float], ubs: Sequence[float]) -> None:
        raise NotImplementedError

    def solve(self) -> LPResult:
        raise NotImplementedError

    @property
    def num_cols(self) -> int:
        raise NotImplementedError

    @property
    def num_rows(self) -> int:
        raise NotImplementedError


class HighsLP(LPBackend):
    def __init__(self, *, threads: int = 1):
        import highspy

        self._hs = highspy
        self._h = highspy.Highs()
        self._h.setOptionValue("output_flag", False)
        self._h.setOptionValue("threads", threads)
        self._inf = highspy.kHighsInf

    def _b(self, v: float) -> float:
        if v == INF:
            return self._inf
        if v == -INF:
            return -self._inf
        return float(v)

    def add_col(self, cost, lb, ub, rows=(), vals=()):
        idx = np.asarray(rows, dtype=np.int32)
        val = np.asarray(vals, dtype=float)
        self._h.addCol(float(cost), self._b(lb), self._b(ub), len(idx), idx, val)
        return self._h.getNumCol() - 1

    def add_cols(self, costs, lbs, ubs):
        costs = np.asarray(costs, dtype=float)
        start = self._h.getNumCol()
        k = len(costs)
        if k == 0:
            return []
        lbs = np.array([self._b(v) for v in lbs], dtype=float)
        ubs = np.array([self._b(v) for v in ubs], dtype=float)
        self._h.addCols(k, costs, lbs, ubs, 0, np.zeros(k, dtype=np.int32), np.zeros(0, dtype=np.int32), np.zeros(0))
        return list(range(start, start + k))

    def add_row(self, cols, vals, lb, ub):
        idx = np.asarray(cols, dtype=np.int32)
        val = np.asarray(vals, dtype=float)
        self._h.addRow(self._b(lb), self._b(ub), len(idx), idx, val)
        return self._h.getNumRow() - 1

    def set_col_bounds(self, cols, lbs, ubs):
        cols = np.asarray(cols, dtype=np.int32)
        if len(cols) == 0:
            return
        lbs = np.array([self._b(v) for v in lbs], dtype=float)
        ubs = np.array([self._b(v) for v in ubs], dtype=float)
        self._h.changeColsBounds(len(cols), cols, lbs, ubs)

    def solve(self) -> LPResult:
        h = self._h
        h.run()
        status = h.getModelStatus()
        ms = self._hs.HighsModelStatus
        n, m = h.getNumCol(), h.getNumRow()
        if status == ms.kOptimal:
            sol = h.getSolution()
            return LPResult(
                LPStatus.OPTIMAL,
                float(h.getInfo().objective_function_value),
                np.asarray(sol.col_value, dtype=float),
                np.asarray(sol.row_dual, dtype=float),
            )
        if status in (ms.kInfeasible,):
            return LPResult(LPStatus.INFEASIBLE, INF, np.zeros(n), np.zeros(m))
        if status in (ms.kUnbounded, ms.kUnboundedOrInfeasible):
            # distinguish by re-solving from scratch with presolve off
            h.clearSolver()
            h.setOptionValue("presolve", "off")
            h.run()
            h.setOptionValue("presolve", "choose")
            status = h.getModelStatus()
            if status == ms.kOptimal:
                return self.solve()
            if status == ms.kInfeasible:
                return LPResult(LPStatus.INFEASIBLE, INF, np.zeros(n), np.zeros(m))
            return LPResult(LPStatus.UNBOUNDED, -INF, np.zeros(n), np.zeros(m))
        return LPResult(LPStatus.ERROR, math.nan, np.zeros(n), np.zeros(m))

    @property
    def num_cols(self):
        return self._h.getNumCol()

    @property
    def num_rows(self):
        return self._h.getNumRow()


class ScipyLP(LPBackend):
    """Reference backend on :func:`scipy.optimize.linprog` (HiGHS method)."""

    def __init__(self):
        self._c: list[float] = []
        self._bounds: list[list[float]] = []
        self._rows: list[tuple[np.ndarray, np.ndarray, float, float]] = []

    def add_col(self, cost, lb, ub, rows=(), vals=()):
        j = len(self._c)
        self._c.append(float(cost))
        self._bounds.append([lb, ub])
        for r, v in zip(rows, vals):
            cols, coefs, lo, hi = self._rows[r]
            self._rows[r] = (np.append(cols, j), np.append(coefs, v), lo, hi)
        return j

    def add_row(self, cols, vals, lb, ub):
        self._rows.append((np.asarray(cols, dtype=int), np.asarray(vals, dtype=float), lb, ub))
        return len(self._rows) - 1

    def set_col_bounds(self, cols, lbs, ubs):
        for j, l, u in zip(cols, lbs, ubs):
            self._bounds[j] = [l, u]

    def solve(self) -> LPResult:
        from scipy.optimize import linprog

        n = len(self._c)
        ub_rows, ub_rhs, ub_map = [], [], []
        eq_rows, eq_rhs, eq_map = [], [], []
        for r, (cols, coefs, lo, hi) in enumerate(self._rows):
            dense = np.zeros(n)
            np.add.at(dense, cols, coefs)
            if lo == hi:
                eq_rows.append(dense), eq_rhs.append(lo), eq_map.append(r)
                continue
            if hi < INF:
                ub_rows.append(dense), ub_rhs.append(hi), ub_map.append((r, 1.0))
            if lo > -INF:
                ub_rows.append(-dense), ub_rhs.append(-lo), ub_map.append((r, -1.0))
        bounds = [(None if l == -INF else l, None if u == INF else u) for l, u in self._bounds]
        res = linprog(
            np.asarray(self._c),
            A_ub=np.array(ub_rows) if ub_rows else None,
            b_ub=np.array(ub_rhs) if ub_rows else None,
            A_eq=np.array(eq_rows) if eq_rows else None,
            b_eq=np.array(eq_rhs) if eq_rows else None,
            bounds=bounds,
            method="highs",
        )
        m = len(self._rows)
        if res.status == 2:
            return LPResult(LPStatus.INFEASIBLE, INF, np.zeros(n), np.zeros(m))
        if res.status == 3:
            return LPResult(LPStatus.UNBOUNDED, -INF, np.zeros(n), np.zeros(m))
        if res.status != 0:
            return LPResult(LPStatus.ERROR, math.nan, np.zeros(n), np.zeros(m))
        duals = np.zeros(m)
        if ub_rows:
            for (r, sign), mu in zip(ub_map, res.ineqlin.marginals):
                # marginals are d obj / d b_ub <= 0; map back to the original row
                duals[r] += sign * mu
        if eq_rows:
            for r, mu in zip(eq_map, res.eqlin.marginals):
                duals[r] += mu
        return LPResult(LPStatus.OPTIMAL, float(res.fun), np.asarray(res.x), duals)

    @property
    def num_cols(self):
        return len(self._c)

    @property
    def num_rows(self):
        return len(self._rows)


def make_lp(backend: str = "highs") -> LPBackend:
    if backend == "highs":
        return HighsLP()
    if backend == "scipy":
        return ScipyLP()
    raise ValueError(f"unknown LP backend {backend!r}")
