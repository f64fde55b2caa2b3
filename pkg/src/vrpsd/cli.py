"""Command-line interface: ``vrpsd solve | bounds | check-mono | generate``.

Exit codes: 0 optimal (or success), 1 runtime error, 2 usage error,
3 time limit reached, 4 infeasible instance.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, TextIO

from . import instance as inst_mod
from .bounds import BoundDomainError, CoveringInfeasible, l1_single_route, l2_dp, lsg18_bound, solve_l3
from .cuts import CutRefused
from .engine import SolverConfig, SolverReport, SolverStatus, branch_and_cut
from .instance import GenerationError, StochasticInstance, generate_jabali
from .monotonicity import certify_instance, verify_normal_grid
from .recourse import DEFAULT_TRUNCATION

__all__ = [
    "SCHEMA",
    "EXIT_OK",
    "EXIT_ERROR",
    "EXIT_USAGE",
    "EXIT_TIME_LIMIT",
    "EXIT_INFEASIBLE",
    "RunConfig",
    "GapRow",
    "compute_gap_row",
    "read_instance",
    "build_parser",
    "main",
]

SCHEMA = "vrpsd.report/1"
EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2
EXIT_TIME_LIMIT = 3
EXIT_INFEASIBLE = 4

_STATUS_EXIT = {SolverStatus.OPTIMAL: EXIT_OK, SolverStatus.TIME_LIMIT: EXIT_TIME_LIMIT, SolverStatus.INFEASIBLE: EXIT_INFEASIBLE}
BOUND_NAMES = ("LSG18", "L1", "L2", "L3")


@dataclass
class RunConfig:
    command: str
    paths: list[str] = field(default_factory=list)
    time_limit: float = 3600.0
    cuts: frozenset = frozenset({"p", "s"})
    truncation: float = DEFAULT_TRUNCATION
    lmax: int = 3
    seed: int = 0
    out: Optional[str] = None
    fmt: str = "table"

    def solver_config(self) -> SolverConfig:
        return SolverConfig(time_limit=self.time_limit, truncation=self.truncation, cuts=self.cuts, lmax=self.lmax, seed=self.seed)


class UsageError(ValueError):
    pass


def read_instance(path: str) -> StochasticInstance:
    p = Path(path)
    if p.suffix.lower() == ".json":
        return inst_mod.load(p)
    return inst_mod.read_cvrplib(p)


# ----------------------------------------------------------------------
# bound gaps


@dataclass
class GapRow:
    name: str
    recourse: float
    bounds: dict  # bound name -> value or None
    l3_seconds: float
    fleet: int

    def gap(self, bound: str) -> Optional[float]:
        """Percentage ``(recourse - bound) / recourse * 100``; ``None`` when undefined."""
        v = self.bounds.get(bound)
        if v is None or not self.recourse > 0:
            return None
        return (self.recourse - v) / self.recourse * 100.0

    @property
    def flagged(self) -> bool:
        return not self.recourse > 0

    def to_record(self) -> dict:
        return {
            "schema": SCHEMA,
            "kind": "bounds",
            "instance": self.name,
            "recourse": self.recourse,
            "fleet": self.fleet,
            "bounds": self.bounds,
            "gaps": {b: self.gap(b) for b in BOUND_NAMES},
            "l3_seconds": self.l3_seconds,
            "flagged": self.flagged,
        }


def compute_gap_row(instance: StochasticInstance, routes: Sequence[Sequence[int]], recourse: float, truncation: float = DEFAULT_TRUNCATION, name: str = "") -> GapRow:
    """Every bound evaluated against the routes of a best-known solution."""
    ids = instance.customer_ids
    m = len(routes)
    bounds: dict = {}
    bounds["LSG18"] = lsg18_bound(ids, m, instance, truncation)
    try:
        bounds["L1"] = float(sum(l1_single_route(r, instance, truncation) for r in routes))
    except BoundDomainError:
        bounds["L1"] = None
    try:
        bounds["L2"] = l2_dp(ids, m, instance, truncation)
    except BoundDomainError:
        bounds["L2"] = None
    t = time.perf_counter()
    try:
        bounds["L3"] = solve_l3(ids, m, instance, truncation).value
    except (BoundDomainError, CoveringInfeasible):
        bounds["L3"] = None
    return GapRow(name or instance.name, recourse, bounds, time.perf_counter() - t, m)


# ----------------------------------------------------------------------
# output helpers


def _open_out(cfg: RunConfig) -> TextIO:
    if cfg.out and cfg.out != "-":
        return open(cfg.out, "w", encoding="utf-8")
    return sys.stdout


def _fmt(v: Optional[float], digits: int = 2) -> str:
    return "-" if v is None or (isinstance(v, float) and not math.isfinite(v)) else f"{v:.{digits}f}"


def _solve_record(name: str, rep: SolverReport) -> dict:
    rec = {"schema": SCHEMA, "kind": "solve", "instance": name}
    rec.update(rep.to_record())
    return rec


# ----------------------------------------------------------------------
# commands


def cmd_solve(cfg: RunConfig) -> int:
    code = EXIT_OK
    out = _open_out(cfg)
    try:
        for path in cfg.paths:
            inst = read_instance(path)
            rep = branch_and_cut(inst, cfg.solver_config())
            name = inst.name or Path(path).stem
            if cfg.fmt == "records":
                out.write(json.dumps(_solve_record(name, rep)) + "\n")
            else:
                out.write(
                    f"{name}: {rep.status}  cost={_fmt(rep.objective, 4)}  travel={_fmt(rep.travel_cost, 4)}  "
                    f"recourse={_fmt(rep.recourse_cost, 4)}  lb={_fmt(rep.lower_bound, 4)}  gap%={_fmt(rep.gap * 100 if math.isfinite(rep.gap) else None, 4)}  "
                    f"nodes={rep.nodes}  time={rep.wall_time:.2f}s\n"
                )
                for r in rep.routes:
                    out.write("  route: 0 " + " ".join(map(str, r)) + " 0\n")
                out.write("  cuts: " + ", ".join(f"{k}={v}" for k, v in sorted(rep.cuts_by_kind.items())) + "\n")
            code = max(code, _STATUS_EXIT[rep.status])
    finally:
        if out is not sys.stdout:
            out.close()
    return code


def cmd_bounds(cfg: RunConfig) -> int:
    rows: list[GapRow] = []
    code = EXIT_OK
    for path in cfg.paths:
        inst = read_instance(path)
        rep = branch_and_cut(inst, cfg.solver_config())
        if not rep.routes:
            code = max(code, EXIT_INFEASIBLE)
            continue
        if rep.status != SolverStatus.OPTIMAL:
            code = max(code, EXIT_TIME_LIMIT)
        rows.append(compute_gap_row(inst, rep.routes, rep.recourse_cost, cfg.truncation, inst.name or Path(path).stem))
    out = _open_out(cfg)
    try:
        if cfg.fmt == "records":
            for r in rows:
                out.write(json.dumps(r.to_record()) + "\n")
            out.write(json.dumps({"schema": SCHEMA, "kind": "bounds-average", **_averages(rows)}) + "\n")
        else:
            out.write(f"{'instance':<24}{'LSG18':>9}{'L1':>9}{'L2':>9}{'L3':>9}{'L3 (s)':>9}\n")
            for r in rows:
                flag = " *" if r.flagged else ""
                cells = "".join(f"{_fmt(r.gap(b)):>9}" for b in BOUND_NAMES)
                out.write(f"{r.name:<24}{cells}{r.l3_seconds:>9.2f}{flag}\n")
            avg = _averages(rows)
            cells = "".join(f"{_fmt(avg['gaps'][b]):>9}" for b in BOUND_NAMES)
            out.write(f"{'average':<24}{cells}{_fmt(avg['l3_seconds']):>9}\n")
            if any(r.flagged for r in rows):
                out.write("* zero recourse in the best solution: gap undefined\n")
    finally:
        if out is not sys.stdout:
            out.close()
    return code


def _averages(rows: Sequence[GapRow]) -> dict:
    gaps = {}
    for b in BOUND_NAMES:
        vals = [r.gap(b) for r in rows if r.gap(b) is not None]
        gaps[b] = sum(vals) / len(vals) if vals else None
    secs = [r.l3_seconds for r in rows]
    return {"count": len(rows), "gaps": gaps, "l3_seconds": sum(secs) / len(secs) if secs else None}


def cmd_check_mono(cfg: RunConfig, grid: Optional[dict] = None) -> int:
    out = _open_out(cfg)
    try:
        for path in cfg.paths:
            inst = read_instance(path)
            cert = certify_instance(inst, cfg.lmax)
            rec = {"schema": SCHEMA, "kind": "monotonicity", "instance": inst.name or Path(path).stem, **cert.to_record()}
            if cfg.fmt == "records":
                out.write(json.dumps(rec) + "\n")
            else:
                line = f"{rec['instance']}: {cert.verdict.value}"
                if cert.witness is not None:
                    a, b, rest, l = cert.witness
                    line += f"  witness a={a} b={b} S={list(rest)} l={l} margin={cert.margin:.3g}"
                if cert.detail:
                    line += f"  ({cert.detail})"
                out.write(line + "\n")
        if grid is not None:
            rep = verify_normal_grid(grid["capacity"], tuple(grid["mean_range"]), grid["dispersion"], range(1, cfg.lmax + 1))
            if cfg.fmt == "records":
                out.write(json.dumps({"schema": SCHEMA, "kind": "normal-grid", "passed": rep.passed, "failed": rep.failed, "worst_margin": rep.worst_margin}) + "\n")
            else:
                out.write(f"normal grid Q={grid['capacity']}: {rep.passed + rep.failed} points checked, {rep.failed} violations\n")
    finally:
        if out is not sys.stdout:
            out.close()
    return EXIT_OK


def cmd_generate(args) -> int:
    outdir = Path(args.out or ".")
    outdir.mkdir(parents=True, exist_ok=True)
    code = EXIT_OK
    written = 0
    for n in args.n:
        for m in args.vehicles:
            for f in args.fill:
                for rep in range(args.replicates):
                    seed = args.seed + rep
                    name = f"n{n}_m{m}_f{f:.2f}_r{rep}_s{seed}"
                    try:
                        inst = generate_jabali(n, m, f, args.dispersion, seed=seed)
                    except GenerationError as exc:
                        print(f"{name}: {exc}", file=sys.stderr)
                        code = EXIT_ERROR
                        continue
                    inst_mod.save(inst, outdir / f"{name}.json")
                    written += 1
    print(f"wrote {written} instance(s) to {outdir}")
    return code


# ----------------------------------------------------------------------
# parser


def _cuts(text: str) -> frozenset:
    items = frozenset(t.strip().lower() for t in text.split(",") if t.strip())
    bad = items - {"p", "s", "r", "classic"}
    if bad or not items:
        raise argparse.ArgumentTypeError(f"cut families must be a comma list of p,s,r,classic (got {text!r})")
    return items


def _positive(text: str) -> float:
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def _fill(text: str) -> float:
    v = float(text)
    if not 0 < v <= 1:
        raise argparse.ArgumentTypeError("filling coefficient must lie in (0, 1]")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--time-limit", type=_positive, default=3600.0, help="seconds per instance (default 3600)")
    common.add_argument("--truncation", type=float, default=DEFAULT_TRUNCATION, help="restock-term truncation threshold")
    common.add_argument("--cuts", type=_cuts, default=frozenset({"p", "s"}), help="comma list of p,s,r,classic")
    common.add_argument("--lmax", type=int, default=3, help="largest restock index checked for monotonicity")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--format", dest="fmt", choices=("table", "records"), default="table")
    common.add_argument("--out", default=None, help="output file (default stdout)")

    ap = argparse.ArgumentParser(prog="vrpsd", description="Exact branch-and-cut for the VRP with stochastic demands.")
    sub = ap.add_subparsers(dest="command", required=True)
    p = sub.add_parser("solve", parents=[common], help="solve instances to optimality")
    p.add_argument("instances", nargs="+")
    p = sub.add_parser("bounds", parents=[common], help="gap report of recourse lower bounds")
    p.add_argument("instances", nargs="+")
    p = sub.add_parser("check-mono", parents=[common], help="monotonicity certificate")
    p.add_argument("instances", nargs="*")
    p.add_argument("--grid-capacity", type=float, default=None, help="also verify the normal grid at this capacity")
    p.add_argument("--grid-means", type=int, nargs=2, default=(1, 10), metavar=("LO", "HI"))
    p.add_argument("--grid-dispersion", type=float, default=1.0)
    p = sub.add_parser("generate", parents=[common], help="write a suite of random instances")
    p.add_argument("--n", type=int, nargs="+", required=True)
    p.add_argument("--vehicles", type=int, nargs="+", required=True)
    p.add_argument("--fill", type=_fill, nargs="+", required=True)
    p.add_argument("--replicates", type=int, default=10)
    p.add_argument("--dispersion", type=_positive, default=1.0)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    cfg = RunConfig(
        command=args.command,
        paths=list(getattr(args, "instances", []) or []),
        time_limit=args.time_limit,
        cuts=args.cuts,
        truncation=args.truncation,
        lmax=args.lmax,
        seed=args.seed,
        out=args.out,
        fmt=args.fmt,
    )
    try:
        if args.command == "solve":
            return cmd_solve(cfg)
        if args.command == "bounds":
            return cmd_bounds(cfg)
        if args.command == "check-mono":
            if not cfg.paths and args.grid_capacity is None:
                print("check-mono: give instances or --grid-capacity", file=sys.stderr)
                return EXIT_USAGE
            grid = None
            if args.grid_capacity is not None:
                grid = {"capacity": args.grid_capacity, "mean_range": args.grid_means, "dispersion": args.grid_dispersion}
            return cmd_check_mono(cfg, grid)
        if args.command == "generate":
            return cmd_generate(args)
    except CutRefused as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    return EXIT_USAGE  # pragma: no cover


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
