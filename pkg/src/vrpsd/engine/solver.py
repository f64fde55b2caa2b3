"""Branch-and-cut over the master LP with recourse optimality cuts."""

from __future__ import annotations

import heapq
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from ..bounds import BoundDomainError, fleet_lb_vector, l1_single_route, l2_dp
from ..cuts import (
    CutKind,
    CutRefused,
    LinearCut,
    capacity_cut,
    classic_cut,
    p_cut,
    r_cut,
    s_cut,
)
from ..instance import StochasticInstance
from ..monotonicity import MonotonicityCertificate, certify_instance
from ..recourse import DEFAULT_TRUNCATION, RecourseEvaluator
from .heuristic import Incumbent, heuristic_incumbent, route_travel
from .master import MasterModel, MasterSolution, build_master
from .separation import (
    analyze_fractional_components,
    enumerate_subpaths,
    extract_routes,
    is_integral,
    separate_rounded_capacity,
)

__all__ = [
    "SolverConfig",
    "SolverReport",
    "SolverStatus",
    "NodeState",
    "LPFailure",
    "CutGenerator",
    "branch_and_cut",
    "on_integer_solution",
]

log = logging.getLogger(__name__)

ALL_CUTS = frozenset({"p", "s", "r", "classic"})


class LPFailure(RuntimeError):
    """The LP oracle returned neither an optimum nor infeasibility."""


class SolverStatus:
    OPTIMAL = "Optimal"
    TIME_LIMIT = "TimeLimit"
    INFEASIBLE = "Infeasible"


@dataclass
class SolverConfig:
    time_limit: float = 3600.0
    truncation: float = DEFAULT_TRUNCATION
    cuts: frozenset = frozenset({"p", "s"})
    violation_tol: float = 1e-6
    integrality_tol: float = 1e-6
    max_capacity_cuts: int = 50
    max_removed: int = 5
    top_cuts: int = 5
    max_scut_checks: int = 200
    tailing_rounds: int = 10
    tailing_eps: float = 1e-5
    heuristic_time: float = 10.0
    use_fleet_bound: bool = True
    lp_backend: str = "highs"
    lmax: int = 3
    seed: int = 0
    trace: Optional[Callable[[dict], None]] = None

    def __post_init__(self):
        self.cuts = frozenset(c.lower() for c in self.cuts)
        bad = self.cuts - ALL_CUTS
        if bad:
            raise ValueError(f"unknown cut families {sorted(bad)}; choose from {sorted(ALL_CUTS)}")
        if not self.cuts & {"p", "r", "classic"}:
            raise ValueError("at least one optimality cut family (p, r or classic) is required")
        if not self.time_limit > 0:
            raise ValueError("time limit must be positive")


@dataclass
class NodeState:
    id: int
    fixings: dict  # column -> (lb, ub)
    bound: float
    depth: int = 0

    def __post_init__(self):
        for c, (lb, ub) in self.fixings.items():
            if lb > ub:
                raise ValueError(f"inconsistent fixing on column {c}: [{lb}, {ub}]")

    def __lt__(self, other: "NodeState"):
        return (self.bound, self.id) < (other.bound, other.id)


@dataclass
class SolverReport:
    status: str
    routes: list[tuple[int, ...]]
    travel_cost: float
    recourse_cost: float
    lower_bound: float
    nodes: int
    cuts_by_kind: dict
    wall_time: float
    theta_sum: Optional[float] = None
    fleet_bounds: dict = field(default_factory=dict)
    monotone: Optional[str] = None
    root_bound: Optional[float] = None
    trajectory: list = field(default_factory=list)

    @property
    def objective(self) -> float:
        return self.travel_cost + self.recourse_cost if self.routes else math.inf

    @property
    def gap(self) -> float:
        """Relative gap ``(UB - LB) / UB``; zero when both agree."""
        ub = self.objective
        if not math.isfinite(ub):
            return math.inf
        if abs(ub - self.lower_bound) <= 1e-12 * max(1.0, abs(ub)):
            return 0.0
        return (ub - self.lower_bound) / abs(ub) if ub != 0 else math.inf

    def to_record(self) -> dict:
        return {
            "status": self.status,
            "routes": [list(r) for r in self.routes],
            "travel_cost": self.travel_cost,
            "recourse_cost": self.recourse_cost,
            "objective": self.objective if math.isfinite(self.objective) else None,
            "lower_bound": self.lower_bound if math.isfinite(self.lower_bound) else None,
            "gap": self.gap if math.isfinite(self.gap) else None,
            "nodes": self.nodes,
            "cuts_by_kind": dict(self.cuts_by_kind),
            "wall_time": self.wall_time,
            "theta_sum": self.theta_sum,
            "fleet_bounds": {str(k): (v if math.isfinite(v) else None) for k, v in self.fleet_bounds.items()},
            "monotone": self.monotone,
            "root_bound": self.root_bound,
        }


# ----------------------------------------------------------------------
# cut generation shared by the driver and the tests


class CutGenerator:
    """Builds optimality cuts from LP points with memoised bound values."""

    def __init__(self, instance: StochasticInstance, config: SolverConfig, monotone: bool, evaluator: Optional[RecourseEvaluator] = None):
        self.inst = instance
        self.cfg = config
        self.monotone = monotone
        self.ev = evaluator or RecourseEvaluator(instance, config.truncation)
        self._L: dict = {}
        self.fleet_bounds: dict = {}

    # bound of a set for its S-Cut, or None when no bound is available
    def set_bound(self, S: Iterable[int]) -> Optional[float]:
        key = frozenset(S)
        if key in self._L:
            return self._L[key]
        ids = sorted(key)
        inst = self.inst
        try:
            if inst.load(ids) <= inst.capacity + 1e-9:
                v = l1_single_route(ids, inst, self.cfg.truncation, check=False)
            else:
                v = l2_dp(ids, inst.min_vehicles(ids), inst, self.cfg.truncation)
        except BoundDomainError:
            v = None
        if v is not None and not math.isfinite(v):
            v = None
        self._L[key] = v
        return v

    @property
    def path_mode(self) -> bool:
        return self.monotone and "p" in self.cfg.cuts

    @property
    def set_mode(self) -> bool:
        return self.monotone and "s" in self.cfg.cuts

    def scut_candidates(self, sets: Iterable[Sequence[int]], sol: MasterSolution) -> list[tuple[float, LinearCut]]:
        if not self.set_mode:
            return []
        tol = self.cfg.violation_tol
        X, theta = sol.X, sol.theta
        scored = []
        for S in sets:
            idx = np.asarray(S, dtype=int)
            xin = float(X[np.ix_(idx, idx)].sum() / 2.0) if len(idx) > 1 else 0.0
            k = self.inst.min_vehicles(S)
            factor = xin - len(S) + k + 1
            if factor <= tol:
                continue
            scored.append((factor, float(theta[idx].sum()), tuple(S)))
        scored.sort(key=lambda t: (-(t[0]), t[1], len(t[2]), t[2]))
        out = []
        for factor, th, S in scored[: self.cfg.max_scut_checks]:
            L = self.set_bound(S)
            if L is None or L <= 0:
                continue
            viol = L * factor - th
            if viol > tol:
                out.append((viol, s_cut(S, L, self.inst)))
        return out

    def component_cuts(self, sol: MasterSolution) -> list[tuple[float, LinearCut]]:
        tol = self.cfg.violation_tol
        out = []
        comps = analyze_fractional_components(sol.X)
        out.extend(self.scut_candidates([c.nodes for c in comps], sol))
        if self.path_mode:
            for c in comps:
                if not c.is_path:
                    continue
                p = c.order
                q = self.ev.route(p)
                if q <= 0:
                    continue
                xp = sum(sol.X[a, b] for a, b in zip(p, p[1:]))
                viol = q * (xp - (len(p) - 1) + 1) - float(sol.theta[list(p)].sum())
                if viol > tol:
                    out.append((viol, p_cut(p, q)))
        return out

    def integer_cuts(self, routes: Sequence[tuple[int, ...]], sol: MasterSolution) -> list[LinearCut]:
        """Violated cuts at an integer point whose routes are capacity-feasible."""
        cfg = self.cfg
        tol = cfg.violation_tol
        X, theta = sol.X, sol.theta
        out: list[LinearCut] = []
        if self.path_mode:
            pcands, scands = [], []
            for r in routes:
                r, q_r = self.ev.orientation(r)
                th_r = float(theta[list(r)].sum())
                if q_r - th_r > tol:
                    out.append(p_cut(r, q_r))
                for sub in enumerate_subpaths(r, cfg.max_removed):
                    if len(sub) == len(r):
                        continue
                    xp = sum(X[a, b] for a, b in zip(sub, sub[1:]))
                    factor = xp - (len(sub) - 1) + 1
                    if factor <= tol:
                        continue
                    th = float(theta[list(sub)].sum())
                    q = self.ev.route(sub)
                    viol = q * factor - th
                    if viol > tol:
                        pcands.append((viol, sub, p_cut(sub, q)))
                    if self.set_mode:
                        L = self.set_bound(sub)
                        if L is not None:
                            S = tuple(sorted(sub))
                            idx = np.asarray(S)
                            xin = float(X[np.ix_(idx, idx)].sum() / 2.0) if len(S) > 1 else 0.0
                            fs = xin - len(S) + self.inst.min_vehicles(S) + 1
                            sv = L * fs - th
                            if fs > tol and sv > tol:
                                scands.append((sv, S, s_cut(S, L, self.inst)))
            pcands.sort(key=lambda t: (-t[0], t[1]))
            scands.sort(key=lambda t: (-t[0], t[1]))
            out.extend(c for _, _, c in pcands[: cfg.top_cuts])
            seen = set()
            for _, S, c in scands:
                if S in seen:
                    continue
                seen.add(S)
                out.append(c)
                if len(seen) >= cfg.top_cuts:
                    break
        elif "r" in cfg.cuts:
            for r in routes:
                q_r = self.ev.route(r)
                if q_r - float(theta[list(r)].sum()) > tol:
                    out.append(r_cut(r, q_r))
        if "classic" in cfg.cuts:
            total = sum(self.ev.route(r) for r in routes)
            if total - float(theta[1:].sum()) > tol:
                m = len(routes)
                # the cut reaches solutions of every fleet size, so only the
                # smallest fleet bound is a valid global floor
                finite = [v for v in self.fleet_bounds.values() if math.isfinite(v)]
                lower = min(finite) if (self.monotone and finite) else 0.0
                lower = min(lower, total)
                out.append(classic_cut(routes, m, total, lower, self.inst))
        return out


def on_integer_solution(
    sol: MasterSolution,
    instance: StochasticInstance,
    config: Optional[SolverConfig] = None,
    *,
    monotone: Optional[bool] = None,
    generator: Optional[CutGenerator] = None,
) -> list[LinearCut]:
    """Optimality cuts violated at an integer master point with feasible routes."""
    config = config or SolverConfig()
    if generator is None:
        if monotone is None:
            monotone = certify_instance(instance, config.lmax).is_monotone
        generator = CutGenerator(instance, config, monotone)
    routes, cycles = extract_routes(sol.X)
    if cycles:
        raise ValueError("integer point contains depot-free cycles; separate capacity cuts first")
    return generator.integer_cuts(routes, sol)


# ----------------------------------------------------------------------


def _fleet_bounds(instance: StochasticInstance, config: SolverConfig, monotone: bool) -> dict:
    if not (monotone and config.use_fleet_bound):
        return {}
    try:
        return fleet_lb_vector(instance, config.truncation)
    except BoundDomainError as exc:
        log.info("fleet bounds unavailable: %s", exc)
        return {}


def branch_and_cut(instance: StochasticInstance, config: Optional[SolverConfig] = None) -> SolverReport:
    """Exact minimisation of travel cost plus expected recourse."""
    cfg = config or SolverConfig()
    t0 = time.perf_counter()
    deadline = t0 + cfg.time_limit
    cert: MonotonicityCertificate = certify_instance(instance, cfg.lmax)
    monotone = cert.is_monotone
    if not monotone and "p" in cfg.cuts:
        raise CutRefused(
            f"instance is not certified monotone ({cert.verdict.value}); path cuts are invalid, run with cuts r (RCut mode)"
        )
    ev = RecourseEvaluator(instance, cfg.truncation)
    gen = CutGenerator(instance, cfg, monotone, ev)

    fleet = _fleet_bounds(instance, cfg, monotone)
    gen.fleet_bounds = fleet
    master = build_master(instance, fleet if fleet else None, cfg.lp_backend)
    tol = cfg.violation_tol
    allowed = set(instance.fleet_sizes)

    best: Optional[Incumbent] = heuristic_incumbent(
        instance, ev, time_budget=min(cfg.heuristic_time, 0.1 * cfg.time_limit), seed=cfg.seed
    )
    trajectory: list = []

    def seed_route_cuts(routes):
        for r in routes:
            q = ev.route(r)
            if gen.path_mode:
                master.add_cut(p_cut(ev.orientation(r)[0], q))
            elif "r" in cfg.cuts:
                master.add_cut(r_cut(r, q))

    if best is not None:
        seed_route_cuts(best.routes)
        trajectory.append((time.perf_counter() - t0, -math.inf, best.cost))

    def ub() -> float:
        return best.cost if best is not None else math.inf

    def prune_level() -> float:
        u = ub()
        return u - 1e-9 * max(1.0, abs(u))

    def trace(event: dict) -> None:
        if cfg.trace is not None:
            cfg.trace(event)

    heap: list[NodeState] = [NodeState(0, {}, -math.inf)]
    next_id = 1
    nodes = 0
    root_bound: Optional[float] = None
    timed_out = False
    current_bound = math.inf

    while heap:
        node = heapq.heappop(heap)
        if node.bound >= prune_level():
            continue
        if time.perf_counter() > deadline:
            heapq.heappush(heap, node)
            timed_out = True
            break
        nodes += 1
        master.set_bounds(node.fixings)
        history: list[float] = []
        branch_on: Optional[tuple] = None
        current_bound = node.bound
        while True:
            res, sol = master.solve()
            if res.status == "infeasible":
                current_bound = math.inf
                break
            if sol is None:
                raise LPFailure(f"LP oracle status {res.status!r} at node {node.id} (depth {node.depth}, {len(node.fixings)} fixings)")
            lp = res.objective
            current_bound = max(lp, node.bound)
            if node.id == 0:
                root_bound = lp
            if lp >= prune_level():
                break
            if time.perf_counter() > deadline:
                timed_out = True
                break
            edge_vals = sol.raw[master.edge_cols]
            added: dict[str, int] = {}

            def push(cuts: Iterable[LinearCut]):
                for c in cuts:
                    if master.add_cut(c):
                        added[c.kind.value] = added.get(c.kind.value, 0) + 1

            if is_integral(edge_vals, cfg.integrality_tol):
                routes, cycles = extract_routes(sol.X)
                bad = [tuple(sorted(c)) for c in cycles]
                bad += [tuple(sorted(r)) for r in routes if instance.load(r) > instance.capacity + 1e-9]
                if bad:
                    push(capacity_cut(S, instance) for S in bad)
                else:
                    if len(routes) in allowed:
                        travel = sum(route_travel(r, instance) for r in routes)
                        rec = ev.solution(routes)
                        if travel + rec < ub() - 1e-12:
                            best = Incumbent([ev.orientation(r)[0] for r in routes], travel, rec)
                            trajectory.append((time.perf_counter() - t0, None, best.cost))
                            log.debug("new incumbent %.6f at node %d", best.cost, node.id)
                    push(gen.integer_cuts(routes, sol))
                    if not added:
                        zfrac = [(abs(v - 0.5), m) for m, v in sol.z.items() if cfg.integrality_tol < v < 1 - cfg.integrality_tol]
                        if zfrac:
                            m = min(zfrac)[1]
                            branch_on = ("z", master.col_of[("z", m)], sol.z[m])
                        break
            else:
                sep = separate_rounded_capacity(sol.X, instance, max_cuts=cfg.max_capacity_cuts, tol=tol)
                push(capacity_cut(S, instance) for S, _ in sep.violated)
                cands = gen.scut_candidates(sep.inspected, sol)
                cands += gen.component_cuts(sol)
                cands.sort(key=lambda t: -t[0])
                push(c for _, c in cands[: 2 * cfg.max_capacity_cuts])
                history.append(lp)
                stalled = (
                    len(history) > cfg.tailing_rounds
                    and history[-1] - history[-1 - cfg.tailing_rounds] < cfg.tailing_eps * max(1.0, abs(lp))
                )
                if not added or stalled:
                    branch_on = _select_edge(master, edge_vals, instance, cfg.integrality_tol)
                    break
            trace({"node": node.id, "lp": lp, "cuts": dict(added)})
        if timed_out:
            heapq.heappush(heap, NodeState(node.id, node.fixings, current_bound, node.depth))
            break
        if branch_on is None or current_bound >= prune_level():
            continue
        kind, col, val = branch_on
        lo_b, hi_b = master.root_bounds[col]
        lb, ubd = node.fixings.get(col, (lo_b, hi_b))
        down = dict(node.fixings)
        down[col] = (lb, float(math.floor(val)))
        up = dict(node.fixings)
        up[col] = (float(math.ceil(val)), ubd)
        for fx in (down, up):
            heapq.heappush(heap, NodeState(next_id, fx, current_bound, node.depth + 1))
            next_id += 1

    open_bounds = [n.bound for n in heap]
    if timed_out:
        status = SolverStatus.TIME_LIMIT
        lower = min(open_bounds + [ub()])
    elif best is None:
        status = SolverStatus.INFEASIBLE
        lower = math.inf
    else:
        status = SolverStatus.OPTIMAL
        lower = best.cost

    theta_sum = None
    if best is not None:
        master.set_bounds(master.fix_solution(best.routes, len(best.routes)))
        res, sol = master.solve()
        if sol is not None:
            theta_sum = float(sol.theta[1:].sum())
        master.set_bounds({})

    wall = time.perf_counter() - t0
    trajectory.append((wall, lower, ub()))
    return SolverReport(
        status=status,
        routes=list(best.routes) if best is not None else [],
        travel_cost=best.travel if best is not None else math.inf,
        recourse_cost=best.recourse if best is not None else math.inf,
        lower_bound=lower,
        nodes=nodes,
        cuts_by_kind=master.pool.counts(),
        wall_time=wall,
        theta_sum=theta_sum,
        fleet_bounds=fleet,
        monotone=cert.verdict.value,
        root_bound=root_bound,
        trajectory=trajectory,
    )


def _select_edge(master: MasterModel, edge_vals: np.ndarray, instance: StochasticInstance, tol: float):
    frac = edge_vals - np.floor(edge_vals)
    cand = np.nonzero((frac > tol) & (frac < 1 - tol))[0]
    if cand.size == 0:
        return None
    best_key, best = None, None
    for k in cand:
        i, j = master.edges[k]
        key = (abs(frac[k] - 0.5), -float(instance.cost[i, j]), i, j)
        if best_key is None or key < best_key:
            best_key, best = key, k
    return ("x", master.edge_cols[best], float(edge_vals[best]))
