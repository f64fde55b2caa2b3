"""Problem data: customers, costs, capacity and admissible fleet sizes.

Also contains the CVRPLIB reader (with greatest-common-divisor scaling of
demands and capacity), a random instance generator in the style commonly
used for normally distributed demands, and a JSON native format.
"""

from __future__ import annotations

import json
import math
import re
import warnings
from dataclasses import dataclass, field, replace
from functools import cached_property, reduce
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .stochastic import (
    Binomial,
    DemandDistribution,
    Erlang,
    FiniteDiscrete,
    NegativeBinomial,
    Normal,
    NormalApproximationWarning,
    Poisson,
)

__all__ = [
    "CustomerNode",
    "StochasticInstance",
    "FleetProfile",
    "CvrplibParseError",
    "GenerationError",
    "parse_cvrplib",
    "read_cvrplib",
    "normalize_gcd",
    "generate_jabali",
    "unlimited_fleet",
    "make_instance",
    "distribution_to_dict",
    "distribution_from_dict",
    "instance_to_dict",
    "instance_from_dict",
    "dumps",
    "loads",
    "save",
    "load",
]

FORMAT_TAG = "vrpsd.instance/1"


class CvrplibParseError(ValueError):
    """Malformed CVRPLIB text; ``line`` is 1-based when known."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class GenerationError(ValueError):
    """Generator parameters that cannot produce a valid instance."""


@dataclass(frozen=True)
class CustomerNode:
    id: int
    coordinates: tuple[float, float]
    demand: DemandDistribution

    def __post_init__(self):
        if self.id < 1:
            raise ValueError(f"customer ids start at 1, got {self.id}")


@dataclass(frozen=True)
class FleetProfile:
    fixed_size: Optional[int]
    filling_coefficient: float
    dispersion: float


@dataclass(frozen=True, eq=False)
class StochasticInstance:
    """Immutable VRPSD instance.

    Customers are numbered ``1..n`` and ``cost`` is an ``(n+1) x (n+1)``
    symmetric matrix whose index 0 is the depot.
    """

    customers: tuple[CustomerNode, ...]
    cost: np.ndarray
    capacity: float
    fleet_sizes: tuple[int, ...]
    depot: tuple[float, float] = (0.0, 0.0)
    name: str = ""
    source: str = ""
    seed: Optional[int] = None
    profile: Optional[FleetProfile] = None

    def __post_init__(self):
        customers = tuple(sorted(self.customers, key=lambda c: c.id))
        ids = [c.id for c in customers]
        if ids != list(range(1, len(ids) + 1)):
            raise ValueError("customer ids must be exactly 1..n without gaps or duplicates")
        cost = np.array(self.cost, dtype=float)
        n = len(customers)
        if cost.shape != (n + 1, n + 1):
            raise ValueError(f"cost matrix must be {(n + 1, n + 1)}, got {cost.shape}")
        if not np.allclose(cost, cost.T, rtol=0, atol=1e-12):
            raise ValueError("cost matrix must be symmetric")
        if np.any(np.diag(cost) != 0):
            raise ValueError("cost matrix must have a zero diagonal")
        if np.any(cost < 0) or not np.all(np.isfinite(cost)):
            raise ValueError("costs must be finite and non-negative")
        if not self.capacity > 0:
            raise ValueError("capacity must be positive")
        fleet = tuple(sorted({int(m) for m in self.fleet_sizes}))
        if not fleet or fleet[0] < 1:
            raise ValueError("fleet sizes must be a non-empty set of positive integers")
        if n and sum(c.demand.mean for c in customers) <= 0:
            raise ValueError("total expected demand must be positive")
        wide = [c.id for c in customers if isinstance(c.demand, Normal) and c.demand.sigma > c.demand.mu / 3.0 + 1e-12]
        if wide:
            warnings.warn(
                f"{len(wide)} normal demand(s) have sigma > mu/3 (first: customer {wide[0]}); "
                "negative mass is not truncated",
                NormalApproximationWarning,
                stacklevel=3,
            )
        cost.setflags(write=False)
        object.__setattr__(self, "customers", customers)
        object.__setattr__(self, "cost", cost)
        object.__setattr__(self, "fleet_sizes", fleet)

    # ------------------------------------------------------------------
    @property
    def n(self) -> int:
        return len(self.customers)

    @property
    def customer_ids(self) -> list[int]:
        return list(range(1, self.n + 1))

    def demand(self, i: int) -> DemandDistribution:
        return self.customers[i - 1].demand

    def demands(self, ids: Iterable[int]) -> list[DemandDistribution]:
        return [self.customers[i - 1].demand for i in ids]

    @cached_property
    def means(self) -> np.ndarray:
        """Expected demands indexed by node (entry 0 is the depot, 0)."""
        out = np.zeros(self.n + 1)
        for c in self.customers:
            out[c.id] = c.demand.mean
        out.setflags(write=False)
        return out

    @property
    def total_mean(self) -> float:
        return float(self.means.sum())

    def depot_cost(self, i: int) -> float:
        return float(self.cost[0, i])

    def load(self, ids: Iterable[int]) -> float:
        return float(sum(self.means[i] for i in ids))

    def min_vehicles(self, ids: Iterable[int]) -> int:
        """Rounded capacity requirement ``ceil(mu(S) / Q)``."""
        return _ceil_ratio(self.load(ids), self.capacity)

    @cached_property
    def families(self) -> frozenset:
        return frozenset(c.demand.sum_key() for c in self.customers)

    def with_fleet(self, fleet_sizes: Iterable[int]) -> "StochasticInstance":
        return replace(self, fleet_sizes=tuple(fleet_sizes))

    def __eq__(self, other):
        if not isinstance(other, StochasticInstance):
            return NotImplemented
        return instance_to_dict(self) == instance_to_dict(other)

    def __hash__(self):
        return hash(dumps(self))


def _ceil_ratio(a: float, b: float) -> int:
    """ceil(a/b) that ignores float noise just above an integer."""
    r = a / b
    k = math.floor(r + 1e-9)
    return k if abs(r - k) <= 1e-9 else math.ceil(r)


def unlimited_fleet(means: Sequence[float], capacity: float) -> tuple[int, ...]:
    """Fleet sizes ``ceil(sum(mu)/Q) .. n``."""
    if not capacity > 0:
        raise ValueError("capacity must be positive")
    n = len(means)
    lo = max(1, _ceil_ratio(float(sum(means)), capacity))
    return tuple(range(lo, max(lo, n) + 1))


def euclidean_matrix(points: np.ndarray, *, tsplib_round: bool = False) -> np.ndarray:
    diff = points[:, None, :] - points[None, :, :]
    dist = np.sqrt((diff**2).sum(axis=-1))
    if tsplib_round:
        dist = np.floor(dist + 0.5)
    return dist


def make_instance(
    demands: Sequence[DemandDistribution],
    capacity: float,
    *,
    coordinates: Optional[Sequence[tuple[float, float]]] = None,
    depot: tuple[float, float] = (0.0, 0.0),
    cost: Optional[np.ndarray] = None,
    fleet_sizes: Optional[Iterable[int]] = None,
    name: str = "",
    source: str = "",
    seed: Optional[int] = None,
) -> StochasticInstance:
    """Convenience constructor.

    Supply either ``coordinates`` (exact Euclidean costs) or an explicit
    ``cost`` matrix.  Without ``fleet_sizes`` the unlimited fleet is used.
    """
    n = len(demands)
    if coordinates is None:
        coordinates = [(0.0, 0.0)] * n
    if cost is None:
        pts = np.array([depot, *coordinates], dtype=float).reshape(n + 1, 2)
        cost = euclidean_matrix(pts)
    if fleet_sizes is None:
        fleet_sizes = unlimited_fleet([d.mean for d in demands], capacity)
    customers = tuple(
        CustomerNode(i + 1, (float(x), float(y)), d)
        for i, ((x, y), d) in enumerate(zip(coordinates, demands))
    )
    return StochasticInstance(
        customers=customers,
        cost=np.asarray(cost, dtype=float),
        capacity=capacity,
        fleet_sizes=tuple(fleet_sizes),
        depot=(float(depot[0]), float(depot[1])),
        name=name,
        source=source,
        seed=seed,
    )


# ----------------------------------------------------------------------
# CVRPLIB


_SECTION_RE = re.compile(r"^([A-Z_]+)\s*(?::\s*(.*))?$")


def parse_cvrplib(text: str, *, drop_zero_demand: bool = False, name: Optional[str] = None) -> StochasticInstance:
    """Read a TSPLIB-style CVRP file into a Poisson-demand instance.

    Demands become Poisson means, demands and capacity are divided by their
    common gcd, and the fleet is unlimited.  Zero-demand customers are
    rejected unless ``drop_zero_demand`` is set.
    """
    header: dict[str, str] = {}
    coords: dict[int, tuple[float, float]] = {}
    demands: dict[int, float] = {}
    depots: list[int] = []
    section: Optional[str] = None
    seen_sections: set[str] = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line == "EOF":
            break
        upper = line.upper()
        if upper.endswith("_SECTION"):
            section = upper
            seen_sections.add(section)
            if section not in ("NODE_COORD_SECTION", "DEMAND_SECTION", "DEPOT_SECTION"):
                raise CvrplibParseError(f"unsupported section {section}", lineno)
            continue
        m = _SECTION_RE.match(line)
        if m and ":" in line and not line[0].isdigit() and not line[0] == "-":
            key, value = m.group(1).upper(), (m.group(2) or "").strip().strip('"')
            header[key] = value
            section = None
            if key == "EDGE_WEIGHT_TYPE" and value.upper() != "EUC_2D":
                raise CvrplibParseError(f"unsupported edge-weight type {value}", lineno)
            continue
        fields = line.split()
        try:
            if section == "NODE_COORD_SECTION":
                if len(fields) != 3:
                    raise ValueError
                coords[int(fields[0])] = (float(fields[1]), float(fields[2]))
            elif section == "DEMAND_SECTION":
                if len(fields) != 2:
                    raise ValueError
                demands[int(fields[0])] = float(fields[1])
            elif section == "DEPOT_SECTION":
                for f in fields:
                    v = int(f)
                    if v != -1:
                        depots.append(v)
            else:
                raise CvrplibParseError(f"unexpected content {line!r}", lineno)
        except ValueError:
            raise CvrplibParseError(f"malformed {section} entry {line!r}", lineno) from None

    for required in ("NODE_COORD_SECTION", "DEMAND_SECTION"):
        if required not in seen_sections:
            raise CvrplibParseError(f"missing {required}")
    if "CAPACITY" not in header:
        raise CvrplibParseError("missing CAPACITY")
    if header.get("EDGE_WEIGHT_TYPE", "EUC_2D").upper() != "EUC_2D":
        raise CvrplibParseError("unsupported edge-weight type")
    try:
        capacity = float(header["CAPACITY"])
    except ValueError:
        raise CvrplibParseError(f"bad CAPACITY {header['CAPACITY']!r}") from None
    dim = int(header.get("DIMENSION", len(coords)))
    if len(coords) != dim or len(demands) != dim:
        raise CvrplibParseError(
            f"DIMENSION {dim} but {len(coords)} coordinates and {len(demands)} demands"
        )
    depot_id = depots[0] if depots else min(coords)
    if depot_id not in coords:
        raise CvrplibParseError(f"depot {depot_id} has no coordinates")

    customer_ids = [k for k in sorted(coords) if k != depot_id]
    zero = [k for k in customer_ids if demands[k] == 0]
    if zero and not drop_zero_demand:
        raise CvrplibParseError(f"customers with zero demand: {zero}")
    customer_ids = [k for k in customer_ids if demands[k] != 0]
    means = [demands[k] for k in customer_ids]
    if any(not float(v).is_integer() or v < 0 for v in means + [capacity]):
        raise CvrplibParseError("demands and capacity must be non-negative integers")
    g = reduce(math.gcd, [int(v) for v in means] + [int(capacity)])
    means = [v / g for v in means]
    capacity = capacity / g
    pts = np.array([coords[depot_id]] + [coords[k] for k in customer_ids])
    cost = euclidean_matrix(pts, tsplib_round=True)
    return make_instance(
        [Poisson(v) for v in means],
        int(capacity),
        coordinates=[coords[k] for k in customer_ids],
        depot=coords[depot_id],
        cost=cost,
        name=name or header.get("NAME", ""),
        source="cvrplib",
    )


def read_cvrplib(path, **kwargs) -> StochasticInstance:
    with open(path, encoding="utf-8") as fh:
        return parse_cvrplib(fh.read(), **kwargs)


def normalize_gcd(instance: StochasticInstance) -> StochasticInstance:
    """Divide means and capacity by their gcd.

    Supported for Poisson and Normal demands, the families whose mean is a
    free parameter; Normal variances are scaled so that the dispersion
    ``sigma^2 / mu`` is preserved.
    """
    means = [c.demand.mean for c in instance.customers]
    values = means + [instance.capacity]
    if any(not float(v).is_integer() for v in values):
        raise ValueError("normalize_gcd requires integer means and capacity")
    g = reduce(math.gcd, [int(v) for v in values])
    if g == 1:
        return instance
    new_customers = []
    for c in instance.customers:
        d = c.demand
        if isinstance(d, Poisson):
            nd: DemandDistribution = Poisson(d.lam / g)
        elif isinstance(d, Normal):
            nd = Normal(d.mu / g, d.var_ / g)
        else:
            raise ValueError(f"normalize_gcd does not support {d.family} demands")
        new_customers.append(replace(c, demand=nd))
    capacity = instance.capacity / g
    if float(capacity).is_integer():
        capacity = int(capacity)
    fleet = instance.fleet_sizes
    return replace(instance, customers=tuple(new_customers), capacity=capacity, fleet_sizes=fleet)


# ----------------------------------------------------------------------
# generator


def generate_jabali(
    n: int,
    m_bar: int,
    f_bar: float,
    D: float,
    seed: int = 0,
    *,
    side: float = 100.0,
    mean_range: tuple[int, int] = (1, 10),
) -> StochasticInstance:
    """Random instance with integer means and normal demands, variance ``D * mu``.

    Coordinates are uniform on ``[0, side]^2`` with the depot at the centre,
    and ``Q = round(sum(mu) / (m_bar * f_bar))``.  The fleet size is fixed to
    ``m_bar``.
    """
    if n < 2:
        raise GenerationError("n must be at least 2")
    if m_bar < 1:
        raise GenerationError("m_bar must be at least 1")
    if not 0 < f_bar <= 1:
        raise GenerationError("f_bar must lie in (0, 1]")
    if D < 0:
        raise GenerationError("D must be non-negative")
    rng = np.random.default_rng(seed)
    lo, hi = mean_range
    mu = rng.integers(lo, hi + 1, size=n)
    xy = rng.uniform(0.0, side, size=(n, 2))
    depot = (side / 2, side / 2)
    Q = int(math.floor(mu.sum() / (m_bar * f_bar) + 0.5))
    if Q < mu.max():
        raise GenerationError(f"capacity {Q} is below the largest mean {mu.max()}")
    if m_bar * Q < mu.sum():
        raise GenerationError(f"{m_bar} vehicles of capacity {Q} cannot carry {mu.sum()}")
    demands = [Normal(float(v), float(D * v)) for v in mu]
    inst = make_instance(
        demands,
        Q,
        coordinates=[tuple(p) for p in xy],
        depot=depot,
        fleet_sizes=(m_bar,),
        name=f"jabali_n{n}_m{m_bar}_f{f_bar:.2f}_D{D:g}_s{seed}",
        source="generated",
        seed=seed,
    )
    profile = FleetProfile(fixed_size=m_bar, filling_coefficient=float(mu.sum()) / (m_bar * Q), dispersion=D)
    return replace(inst, profile=profile)


# ----------------------------------------------------------------------
# native JSON format

_FAMILIES = {
    "poisson": Poisson,
    "normal": Normal,
    "binomial": Binomial,
    "erlang": Erlang,
    "negative_binomial": NegativeBinomial,
    "finite_discrete": FiniteDiscrete,
}


def distribution_to_dict(d: DemandDistribution) -> dict:
    return {"family": d.family, **d.params()}


def distribution_from_dict(data: Mapping) -> DemandDistribution:
    data = dict(data)
    family = data.pop("family")
    if family == "poisson":
        return Poisson(float(data["lam"]))
    if family == "normal":
        return Normal(float(data["mu"]), float(data["var"]))
    if family == "binomial":
        return Binomial(int(data["n"]), float(data["p"]))
    if family == "erlang":
        return Erlang(int(data["n"]), float(data["rate"]))
    if family == "negative_binomial":
        return NegativeBinomial(int(data["r"]), float(data["p"]))
    if family == "finite_discrete":
        return FiniteDiscrete(tuple(map(float, data["values"])), tuple(map(float, data["probs"])))
    raise ValueError(f"unknown demand family {family!r}")


def instance_to_dict(inst: StochasticInstance) -> dict:
    out = {
        "format": FORMAT_TAG,
        "name": inst.name,
        "source": inst.source,
        "seed": inst.seed,
        "capacity": inst.capacity,
        "fleet_sizes": list(inst.fleet_sizes),
        "depot": list(inst.depot),
        "customers": [
            {"id": c.id, "coordinates": list(c.coordinates), "demand": distribution_to_dict(c.demand)}
            for c in inst.customers
        ],
        "cost": inst.cost.tolist(),
    }
    if inst.profile is not None:
        out["profile"] = {
            "fixed_size": inst.profile.fixed_size,
            "filling_coefficient": inst.profile.filling_coefficient,
            "dispersion": inst.profile.dispersion,
        }
    return out


def instance_from_dict(data: Mapping) -> StochasticInstance:
    if data.get("format") != FORMAT_TAG:
        raise ValueError(f"unsupported instance format {data.get('format')!r}")
    customers = tuple(
        CustomerNode(int(c["id"]), tuple(c["coordinates"]), distribution_from_dict(c["demand"]))
        for c in data["customers"]
    )
    profile = None
    if data.get("profile"):
        p = data["profile"]
        profile = FleetProfile(p["fixed_size"], p["filling_coefficient"], p["dispersion"])
    return StochasticInstance(
        customers=customers,
        cost=np.array(data["cost"], dtype=float),
        capacity=data["capacity"],
        fleet_sizes=tuple(data["fleet_sizes"]),
        depot=tuple(data["depot"]),
        name=data.get("name", ""),
        source=data.get("source", ""),
        seed=data.get("seed"),
        profile=profile,
    )


def dumps(inst: StochasticInstance) -> str:
    return json.dumps(instance_to_dict(inst), sort_keys=True)


def loads(text: str) -> StochasticInstance:
    return instance_from_dict(json.loads(text))


def save(inst: StochasticInstance, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps(inst))
        fh.write("\n")


def load(path) -> StochasticInstance:
    with open(path, encoding="utf-8") as fh:
        return loads(fh.read())
