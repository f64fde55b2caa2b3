"""Checks that removing customers from a path never increases its recourse.

A customer set respects the monotonicity condition when, for every ordered
pair ``(a, b)`` of distinct members, every ``S~`` drawn from the rest and
every restock index ``l``::

    P(X + xa <= lQ < X + xa + xb) >= P(X <= lQ < X + xb),   X = sum over S~

Three routes to a verdict are offered: closed-form family rules, brute
enumeration of the inequality, and a grid sweep for normal demands.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional, Sequence

import numpy as np

from .instance import StochasticInstance
from .stochastic import (
    Binomial,
    DemandDistribution,
    Erlang,
    FiniteDiscrete,
    NegativeBinomial,
    Normal,
    Poisson,
    UnsupportedCombination,
    _normal_cdf,
    sum_of,
    unit_failure_pmf,
)

__all__ = [
    "Verdict",
    "MonotonicityCertificate",
    "GridReport",
    "SufficientConditionResult",
    "SetTooLarge",
    "MARGIN_TOLERANCE",
    "condition_margin",
    "check_condition_enumerative",
    "certify_family",
    "certify_instance",
    "verify_normal_grid",
    "check_sufficient_condition",
]

MARGIN_TOLERANCE = -1e-12
ENUMERATION_GUARD = 15
# Integer-mean checks tolerate float noise in the parameters.
_INTEGER_SLACK = 1e-9


class Verdict(str, Enum):
    CERTIFIED_BY_FAMILY = "CertifiedByFamily"
    VERIFIED_ENUMERATIVELY = "VerifiedEnumeratively"
    VERIFIED_ON_GRID = "VerifiedOnGrid"
    VIOLATED = "Violated"
    UNKNOWN = "Unknown"

    @property
    def is_monotone(self) -> bool:
        return self in (
            Verdict.CERTIFIED_BY_FAMILY,
            Verdict.VERIFIED_ENUMERATIVELY,
            Verdict.VERIFIED_ON_GRID,
        )


@dataclass(frozen=True)
class MonotonicityCertificate:
    verdict: Verdict
    witness: Optional[tuple] = None  # (a, b, S~ as a sorted tuple, l)
    margin: Optional[float] = None
    rule: str = ""
    detail: str = ""

    @property
    def is_monotone(self) -> bool:
        return self.verdict.is_monotone

    def to_record(self) -> dict:
        rec = {"verdict": self.verdict.value, "rule": self.rule, "detail": self.detail}
        if self.witness is not None:
            a, b, rest, l = self.witness
            rec["witness"] = {"a": a, "b": b, "subset": list(rest), "l": l}
        if self.margin is not None:
            rec["margin"] = self.margin
        return rec


class SetTooLarge(ValueError):
    """The enumerative check was asked to handle too many customers."""


def condition_margin(
    subset: Sequence[int], a: int, b: int, l: int, instance: StochasticInstance
) -> float:
    """LHS minus RHS of the monotonicity inequality for one witness."""
    Q = instance.capacity
    t = l * Q
    base = instance.demands(subset)
    xa, xb = instance.demand(a), instance.demand(b)

    def F(ds):
        return float(sum_of(ds, coerce=True).cdf(t))

    lhs = F(base + [xa]) - F(base + [xa, xb])
    rhs = F(base) - F(base + [xb])
    return lhs - rhs


def check_condition_enumerative(
    S: Iterable[int], instance: StochasticInstance, l_max: int = 3
) -> MonotonicityCertificate:
    """Test the inequality for every pair, sub-subset and ``l <= l_max``.

    Pairs are scanned in lexicographic order, then sub-subsets by size and
    lexicographically, then ``l``; the first violation is returned.
    """
    S = sorted(set(S))
    if len(S) > ENUMERATION_GUARD:
        raise SetTooLarge(f"|S|={len(S)} exceeds the enumeration guard {ENUMERATION_GUARD}")
    if l_max < 1:
        raise ValueError("l_max must be >= 1")
    Q = instance.capacity
    thresholds = Q * np.arange(1, l_max + 1)
    cache: dict[frozenset, np.ndarray] = {}

    def F(ids: frozenset) -> np.ndarray:
        v = cache.get(ids)
        if v is None:
            try:
                dist = sum_of(instance.demands(sorted(ids)), coerce=True)
            except UnsupportedCombination as exc:
                raise _Unsupported(str(exc)) from exc
            v = np.atleast_1d(np.asarray(dist.cdf(thresholds), dtype=float))
            cache[ids] = v
        return v

    try:
        return _scan_pairs(S, F, l_max)
    except _Unsupported as exc:
        return MonotonicityCertificate(Verdict.UNKNOWN, rule="enumeration", detail=str(exc))


class _Unsupported(Exception):
    pass


def _scan_pairs(S: list, F, l_max: int) -> MonotonicityCertificate:
    worst = math.inf
    for a, b in itertools.permutations(S, 2):
        others = [i for i in S if i not in (a, b)]
        for size in range(len(others) + 1):
            for rest in itertools.combinations(others, size):
                base = frozenset(rest)
                lhs = F(base | {a}) - F(base | {a, b})
                rhs = F(base) - F(base | {b})
                margins = lhs - rhs
                worst = min(worst, float(margins.min()))
                bad = np.nonzero(margins < MARGIN_TOLERANCE)[0]
                if bad.size:
                    l = int(bad[0]) + 1
                    return MonotonicityCertificate(
                        Verdict.VIOLATED,
                        witness=(a, b, tuple(rest), l),
                        margin=float(margins[bad[0]]),
                        rule="enumeration",
                        detail=f"l_max={l_max}",
                    )
    return MonotonicityCertificate(
        Verdict.VERIFIED_ENUMERATIVELY,
        margin=None if worst == math.inf else worst,
        rule="enumeration",
        detail=f"l_max={l_max}",
    )


def _is_integer(x: float) -> bool:
    return abs(x - round(x)) <= _INTEGER_SLACK


def _family_rule(demands: Sequence[DemandDistribution], Q: float) -> tuple[Optional[str], str]:
    """Name of the family rule that certifies ``demands``; else a reason."""
    if not demands:
        return "empty", ""
    first = demands[0]
    total = sum(d.mean for d in demands)
    fits = total <= Q + 1e-9
    kinds = {type(d) for d in demands}
    if len(kinds) != 1:
        return None, "mixed demand families"
    if isinstance(first, Poisson):
        return ("poisson", "") if fits else (None, f"total mean {total:g} exceeds Q")
    if isinstance(first, Normal):
        if not all(_is_integer(d.mu) for d in demands):
            return None, "normal means are not integers"
        if any(d.mu <= 0 for d in demands):
            return None, "normal means must be positive"
        disp = [d.var_ / d.mu for d in demands]
        if max(disp) - min(disp) > 1e-12 * max(1.0, max(disp)):
            return None, "heterogeneous dispersion"
        if disp[0] > 1 + 1e-12:
            return None, f"dispersion {disp[0]:g} exceeds 1"
        return ("normal", "") if fits else (None, f"total mean {total:g} exceeds Q")
    if isinstance(first, (Binomial, Erlang, NegativeBinomial)):
        if len({d.sum_key() for d in demands}) != 1:
            return None, "no common parameter"
        return (first.family, "") if fits else (None, f"total mean {total:g} exceeds Q")
    return None, f"no family rule for {first.family}"


def certify_family(S: Iterable[int], instance: StochasticInstance) -> MonotonicityCertificate:
    """Certificate from a closed-form family rule, or ``Unknown``."""
    ids = sorted(set(S))
    rule, why = _family_rule(instance.demands(ids), instance.capacity)
    if rule is None:
        return MonotonicityCertificate(Verdict.UNKNOWN, rule="family", detail=why)
    return MonotonicityCertificate(Verdict.CERTIFIED_BY_FAMILY, rule=rule)


def certify_instance(
    instance: StochasticInstance, l_max: int = 3, *, enumerate_up_to: int = 10
) -> MonotonicityCertificate:
    """Decide the monotonicity property for every capacity-feasible set.

    A single family rule covers every set whose expected demand fits in a
    vehicle.  Otherwise small instances are checked by enumerating every
    witness ``(a, b, S~)`` with ``mu(S~ + a + b) <= Q``.
    """
    demands = [c.demand for c in instance.customers]
    # only the homogeneity hypotheses are checked here: the load bound of
    # the rule holds for every capacity-feasible set by definition
    rule, why = _family_rule(demands, math.inf)
    if rule is not None:
        return MonotonicityCertificate(Verdict.CERTIFIED_BY_FAMILY, rule=rule)
    if instance.n > enumerate_up_to:
        return MonotonicityCertificate(Verdict.UNKNOWN, rule="family", detail=why)
    Q = instance.capacity
    ids = instance.customer_ids
    means = instance.means
    worst = math.inf
    for a, b in itertools.permutations(ids, 2):
        others = [i for i in ids if i not in (a, b)]
        room = Q - means[a] - means[b]
        if room < -1e-9:
            continue
        for size in range(len(others) + 1):
            for rest in itertools.combinations(others, size):
                if sum(means[i] for i in rest) > room + 1e-9:
                    continue
                for l in range(1, l_max + 1):
                    try:
                        m = condition_margin(rest, a, b, l, instance)
                    except UnsupportedCombination as exc:
                        return MonotonicityCertificate(Verdict.UNKNOWN, rule="enumeration", detail=str(exc))
                    worst = min(worst, m)
                    if m < MARGIN_TOLERANCE:
                        return MonotonicityCertificate(
                            Verdict.VIOLATED,
                            witness=(a, b, tuple(rest), l),
                            margin=m,
                            rule="enumeration",
                            detail=why,
                        )
    return MonotonicityCertificate(
        Verdict.VERIFIED_ENUMERATIVELY,
        margin=None if worst == math.inf else worst,
        rule="enumeration",
        detail=f"l_max={l_max}",
    )


@dataclass(frozen=True)
class GridReport:
    passed: int
    failed: int
    worst_margin: float
    worst_point: Optional[tuple] = None  # (mu~, mu_a, mu_b, l)

    @property
    def ok(self) -> bool:
        return self.failed == 0


def verify_normal_grid(
    Q: float,
    mean_range: tuple[int, int],
    D: float,
    l_set: Iterable[int] = (1, 2, 3),
    *,
    max_load: Optional[float] = None,
) -> GridReport:
    """Sweep the inequality for normal demands with variance ``D * mu``.

    ``mu_a`` and ``mu_b`` range over ``mean_range`` and ``mu~`` over every
    integer from 0 up to ``max_load - mu_a - mu_b`` (``max_load`` defaults
    to ``Q``).
    """
    lo, hi = mean_range
    cap = Q if max_load is None else max_load
    pts = []
    for ma in range(lo, hi + 1):
        for mb in range(lo, hi + 1):
            top = int(math.floor(cap - ma - mb + 1e-9))
            for mt in range(0, top + 1):
                pts.append((mt, ma, mb))
    if not pts:
        return GridReport(0, 0, math.inf)
    g = np.array(pts, dtype=float)
    mt, ma, mb = g[:, 0], g[:, 1], g[:, 2]
    passed = failed = 0
    worst = math.inf
    worst_point = None
    for l in sorted(set(l_set)):
        t = l * Q

        def F(mu):
            return _normal_cdf(mu, D * mu, t)

        margin = (F(mt + ma) - F(mt + ma + mb)) - (F(mt) - F(mt + mb))
        bad = margin < MARGIN_TOLERANCE
        failed += int(bad.sum())
        passed += int((~bad).sum())
        k = int(np.argmin(margin))
        if margin[k] < worst:
            worst = float(margin[k])
            worst_point = (int(mt[k]), int(ma[k]), int(mb[k]), l)
    return GridReport(passed, failed, worst, worst_point)


@dataclass(frozen=True)
class SufficientConditionResult:
    passed: bool
    worst_margin: float
    worst_point: Optional[tuple] = None  # (j, l)


def check_sufficient_condition(
    rho_tilde: int,
    rho_a: int,
    rho_b: int,
    unit: DemandDistribution,
    Q: float,
    l_max: int = 3,
) -> SufficientConditionResult:
    """Check ``P_lQ(rho~ + rho_a + j) >= P_lQ(rho~ + j)`` for ``j <= rho_b``, ``l <= l_max``.

    ``P_u(s)`` is the probability that exactly ``s`` i.i.d. copies of
    ``unit`` are needed for their running sum to exceed ``u``.
    """
    if min(rho_tilde, rho_a, rho_b) < 0:
        raise ValueError("counts must be non-negative")
    worst = math.inf
    worst_point = None
    for l in range(1, l_max + 1):
        u = l * Q
        for j in range(1, rho_b + 1):
            m = unit_failure_pmf(unit, rho_tilde + rho_a + j, u) - unit_failure_pmf(unit, rho_tilde + j, u)
            if m < worst:
                worst, worst_point = m, (j, l)
    if worst == math.inf:
        return SufficientConditionResult(True, 0.0, None)
    return SufficientConditionResult(worst >= MARGIN_TOLERANCE, worst, worst_point)
