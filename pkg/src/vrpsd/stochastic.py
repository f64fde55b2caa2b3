"""Demand distributions, closed-form sums and failure probabilities.

Every recourse and bound computation reduces to cumulative distribution
functions of partial demand sums.  The families supported here are closed
under independent summation (given a shared parameter where needed), so a
prefix of a route is again a member of the same family with accumulated
parameters.  Finite discrete demands are summed by exact convolution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np
from scipy import special

__all__ = [
    "DemandDistribution",
    "Poisson",
    "Normal",
    "Binomial",
    "Erlang",
    "NegativeBinomial",
    "FiniteDiscrete",
    "PartialSum",
    "UnsupportedCombination",
    "ProbabilityConsistencyError",
    "NormalApproximationWarning",
    "point_mass",
    "sum_of",
    "cdf",
    "failure_interval_mass",
    "unit_failure_pmf",
    "prefix_cdf_matrix",
    "clamp_probability",
]

# Atoms of a convolved table are matched with this slack on the threshold so
# that float round-off in summed support values does not shift a step.
_SUPPORT_SLACK = 1e-9
_NEGATIVE_NOISE = 1e-12
_MAX_ATOMS = 2_000_000


class UnsupportedCombination(ValueError):
    """Raised when demands of incompatible families are summed."""


class NormalApproximationWarning(UserWarning):
    """Normal demands with a standard deviation above a third of the mean.

    Such demands put visible mass below zero; it is kept, not truncated.
    """


class ProbabilityConsistencyError(ArithmeticError):
    """Raised when a difference of probabilities is clearly negative."""


def clamp_probability(value: float, *, strict: bool = True) -> float:
    """Clamp floating noise into [0, 1].

    Values below ``-1e-12`` indicate a modelling error and raise unless
    ``strict`` is false.
    """
    if value < 0.0:
        if value < -_NEGATIVE_NOISE and strict:
            raise ProbabilityConsistencyError(f"negative probability {value!r}")
        return 0.0
    if value > 1.0:
        return 1.0
    return value


class DemandDistribution:
    """Base class of a non-negative customer demand."""

    family: str = ""

    @property
    def mean(self) -> float:
        raise NotImplementedError

    @property
    def var(self) -> float:
        raise NotImplementedError

    def cdf(self, t):
        """P(X <= t), vectorised over ``t``."""
        raise NotImplementedError

    def sum_key(self) -> tuple:
        """Distributions with equal keys sum in closed form."""
        return (self.family,)

    def params(self) -> dict:
        raise NotImplementedError

    def is_integer_valued(self) -> bool:
        return False

    def has_finite_support(self) -> bool:
        return False

    def to_finite_discrete(self) -> "FiniteDiscrete":
        raise UnsupportedCombination(f"{self.family} has no finite support table")


@dataclass(frozen=True)
class Poisson(DemandDistribution):
    lam: float
    family = "poisson"

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError(f"Poisson rate must be positive, got {self.lam}")

    @property
    def mean(self) -> float:
        return float(self.lam)

    @property
    def var(self) -> float:
        return float(self.lam)

    def cdf(self, t):
        return _poisson_cdf(self.lam, t)

    def params(self) -> dict:
        return {"lam": self.lam}

    def is_integer_valued(self) -> bool:
        return True


@dataclass(frozen=True)
class Normal(DemandDistribution):
    """Normal demand; treated as non-negative (no truncation applied)."""

    mu: float
    var_: float = field(metadata={"name": "var"})
    family = "normal"

    def __post_init__(self):
        if self.var_ < 0:
            raise ValueError(f"normal variance must be non-negative, got {self.var_}")

    @property
    def mean(self) -> float:
        return float(self.mu)

    @property
    def var(self) -> float:
        return float(self.var_)

    @property
    def sigma(self) -> float:
        return math.sqrt(self.var_)

    def cdf(self, t):
        return _normal_cdf(self.mu, self.var_, t)

    def params(self) -> dict:
        return {"mu": self.mu, "var": self.var_}


@dataclass(frozen=True)
class Binomial(DemandDistribution):
    n: int
    p: float
    family = "binomial"

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"binomial n must be a positive integer, got {self.n}")
        if not 0 < self.p < 1:
            raise ValueError(f"binomial p must lie in (0, 1), got {self.p}")

    @property
    def mean(self) -> float:
        return self.n * self.p

    @property
    def var(self) -> float:
        return self.n * self.p * (1 - self.p)

    def cdf(self, t):
        return _binomial_cdf(self.n, self.p, t)

    def sum_key(self) -> tuple:
        return (self.family, self.p)

    def params(self) -> dict:
        return {"n": self.n, "p": self.p}

    def is_integer_valued(self) -> bool:
        return True

    def has_finite_support(self) -> bool:
        return True

    def to_finite_discrete(self) -> "FiniteDiscrete":
        k = np.arange(self.n + 1)
        pmf = np.exp(
            special.gammaln(self.n + 1)
            - special.gammaln(k + 1)
            - special.gammaln(self.n - k + 1)
            + k * math.log(self.p)
            + (self.n - k) * math.log1p(-self.p)
        )
        return FiniteDiscrete.from_arrays(k.astype(float), pmf / pmf.sum())


@dataclass(frozen=True)
class Erlang(DemandDistribution):
    n: int
    rate: float
    family = "erlang"

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"Erlang shape must be a positive integer, got {self.n}")
        if not self.rate > 0:
            raise ValueError(f"Erlang rate must be positive, got {self.rate}")

    @property
    def mean(self) -> float:
        return self.n / self.rate

    @property
    def var(self) -> float:
        return self.n / self.rate**2

    def cdf(self, t):
        return _erlang_cdf(self.n, self.rate, t)

    def sum_key(self) -> tuple:
        return (self.family, self.rate)

    def params(self) -> dict:
        return {"n": self.n, "rate": self.rate}


@dataclass(frozen=True)
class NegativeBinomial(DemandDistribution):
    """Number of failures before the ``r``-th success, success probability ``p``."""

    r: int
    p: float
    family = "negative_binomial"

    def __post_init__(self):
        if int(self.r) != self.r or self.r < 1:
            raise ValueError(f"negative binomial r must be a positive integer, got {self.r}")
        if not 0 < self.p < 1:
            raise ValueError(f"negative binomial p must lie in (0, 1), got {self.p}")

    @property
    def mean(self) -> float:
        return self.r * (1 - self.p) / self.p

    @property
    def var(self) -> float:
        return self.r * (1 - self.p) / self.p**2

    def cdf(self, t):
        return _negbin_cdf(self.r, self.p, t)

    def sum_key(self) -> tuple:
        return (self.family, self.p)

    def params(self) -> dict:
        return {"r": self.r, "p": self.p}

    def is_integer_valued(self) -> bool:
        return True


@dataclass(frozen=True, eq=False)
class FiniteDiscrete(DemandDistribution):
    """Demand with finitely many non-negative support points."""

    values: tuple
    probs: tuple
    family = "finite_discrete"

    def __post_init__(self):
        if len(self.values) != len(self.probs) or not self.values:
            raise ValueError("support and probabilities must be non-empty and aligned")
        if any(v < 0 for v in self.values):
            raise ValueError("finite discrete support must be non-negative")
        if any(p < 0 for p in self.probs):
            raise ValueError("probabilities must be non-negative")
        if abs(math.fsum(self.probs) - 1.0) > 1e-12:
            raise ValueError(f"probabilities sum to {math.fsum(self.probs)!r}, not 1")
        order = np.argsort(np.asarray(self.values, dtype=float), kind="stable")
        object.__setattr__(self, "_v", np.asarray(self.values, dtype=float)[order])
        object.__setattr__(self, "_c", np.cumsum(np.asarray(self.probs, dtype=float)[order]))

    @classmethod
    def from_dict(cls, table: dict) -> "FiniteDiscrete":
        items = sorted(table.items())
        return cls(tuple(float(v) for v, _ in items), tuple(float(p) for _, p in items))

    @classmethod
    def from_arrays(cls, values, probs) -> "FiniteDiscrete":
        values = np.asarray(values, dtype=float)
        probs = np.asarray(probs, dtype=float)
        uniq, inv = np.unique(values, return_inverse=True)
        merged = np.zeros(len(uniq))
        np.add.at(merged, inv, probs)
        keep = merged > 0
        if not keep.any():
            keep[:] = True
        return cls(tuple(uniq[keep].tolist()), tuple(merged[keep].tolist()))

    def as_dict(self) -> dict:
        return dict(zip(self.values, self.probs))

    def __eq__(self, other):
        if not isinstance(other, FiniteDiscrete):
            return NotImplemented
        return self.as_dict() == other.as_dict()

    def __hash__(self):
        return hash(tuple(sorted(self.as_dict().items())))

    @property
    def mean(self) -> float:
        return math.fsum(v * p for v, p in zip(self.values, self.probs))

    @property
    def var(self) -> float:
        m = self.mean
        return math.fsum(p * (v - m) ** 2 for v, p in zip(self.values, self.probs))

    def cdf(self, t):
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self._v, t + _SUPPORT_SLACK, side="right")
        out = np.where(idx > 0, self._c[np.maximum(idx - 1, 0)], 0.0)
        out = np.minimum(out, 1.0)
        return out if out.ndim else float(out)

    def params(self) -> dict:
        return {"values": list(self.values), "probs": list(self.probs)}

    def is_integer_valued(self) -> bool:
        return all(float(v).is_integer() for v in self.values)

    def has_finite_support(self) -> bool:
        return True

    def to_finite_discrete(self) -> "FiniteDiscrete":
        return self


def point_mass(value: float = 0.0) -> FiniteDiscrete:
    return FiniteDiscrete((float(value),), (1.0,))


# --------------------------------------------------------------------------
# vectorised cdf kernels; parameters may be zero (point mass at 0)


def _floor_threshold(t):
    return np.floor(np.asarray(t, dtype=float) + _SUPPORT_SLACK)


def _scalar(out):
    return float(out) if np.ndim(out) == 0 else out


def _poisson_cdf(lam, t):
    k = _floor_threshold(t)
    lam = np.asarray(lam, dtype=float)
    k, lam = np.broadcast_arrays(k, lam)
    out = np.where(k < 0, 0.0, special.pdtr(np.maximum(k, 0), np.maximum(lam, 0.0)))
    out = np.where((lam <= 0) & (k >= 0), 1.0, out)
    return _scalar(out)


def _normal_cdf(mu, var, t):
    t = np.asarray(t, dtype=float)
    mu = np.asarray(mu, dtype=float)
    var = np.asarray(var, dtype=float)
    t, mu, var = np.broadcast_arrays(t, mu, var)
    sd = np.sqrt(np.maximum(var, 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(sd > 0, (t - mu) / np.where(sd > 0, sd, 1.0), 0.0)
    out = np.where(sd > 0, special.ndtr(z), (t + _SUPPORT_SLACK >= mu).astype(float))
    return _scalar(out)


def _binomial_cdf(n, p, t):
    k = _floor_threshold(t)
    n = np.asarray(n, dtype=np.int64)
    k, n = np.broadcast_arrays(k, n)
    inside = (k >= 0) & (k < n)
    safe_k = np.where(inside, k, 0).astype(np.int64)
    safe_n = np.where(n > 0, n, 1).astype(np.int64)
    val = special.bdtr(safe_k, safe_n, p)
    out = np.where(k < 0, 0.0, np.where(k >= n, 1.0, val))
    return _scalar(out)


def _erlang_cdf(n, rate, t):
    t = np.asarray(t, dtype=float)
    n = np.asarray(n, dtype=float)
    t, n = np.broadcast_arrays(t, n)
    safe_n = np.where(n > 0, n, 1.0)
    val = special.gammainc(safe_n, rate * np.maximum(t, 0.0))
    out = np.where(t < 0, 0.0, np.where(n <= 0, 1.0, val))
    return _scalar(out)


def _negbin_cdf(r, p, t):
    k = _floor_threshold(t)
    r = np.asarray(r, dtype=float)
    k, r = np.broadcast_arrays(k, r)
    safe_r = np.where(r > 0, r, 1.0)
    val = special.nbdtr(np.maximum(k, 0), safe_r, p)
    out = np.where(k < 0, 0.0, np.where(r <= 0, 1.0, val))
    return _scalar(out)


# --------------------------------------------------------------------------
# sums


@dataclass(frozen=True)
class PartialSum:
    """Sum of ``count`` independent demands, held as a single distribution."""

    dist: DemandDistribution
    count: int

    @property
    def mean(self) -> float:
        return self.dist.mean

    @property
    def var(self) -> float:
        return self.dist.var

    @property
    def family(self) -> str:
        return self.dist.family

    def cdf(self, t):
        return self.dist.cdf(t)


def _convolve(a: FiniteDiscrete, b: FiniteDiscrete) -> FiniteDiscrete:
    if len(a.values) * len(b.values) > _MAX_ATOMS:
        raise MemoryError("finite discrete convolution exceeds the support cap")
    values = np.add.outer(np.asarray(a.values), np.asarray(b.values)).ravel()
    probs = np.multiply.outer(np.asarray(a.probs), np.asarray(b.probs)).ravel()
    values = np.round(values, 12)
    uniq, inv = np.unique(values, return_inverse=True)
    merged = np.zeros(len(uniq))
    np.add.at(merged, inv, probs)
    merged /= merged.sum()
    return FiniteDiscrete(tuple(uniq.tolist()), tuple(merged.tolist()))


def _closed_sum(dists: Sequence[DemandDistribution]) -> DemandDistribution:
    first = dists[0]
    if isinstance(first, Poisson):
        return Poisson(sum(d.lam for d in dists))
    if isinstance(first, Normal):
        return Normal(sum(d.mu for d in dists), sum(d.var_ for d in dists))
    if isinstance(first, Binomial):
        return Binomial(sum(d.n for d in dists), first.p)
    if isinstance(first, Erlang):
        return Erlang(sum(d.n for d in dists), first.rate)
    if isinstance(first, NegativeBinomial):
        return NegativeBinomial(sum(d.r for d in dists), first.p)
    raise UnsupportedCombination(f"no closed-form sum for {first.family}")


def sum_of(demands: Sequence[DemandDistribution], *, coerce: bool = False) -> PartialSum:
    """Distribution of the sum of independent demands.

    Closed families (see :meth:`DemandDistribution.sum_key`) add their
    parameters; finite discrete demands are convolved exactly.  With
    ``coerce=True`` a mix of finite-support families is converted to tables
    first.
    """
    demands = list(demands)
    if not demands:
        return PartialSum(point_mass(0.0), 0)
    keys = {d.sum_key() for d in demands}
    if len(keys) == 1 and not isinstance(demands[0], FiniteDiscrete):
        return PartialSum(_closed_sum(demands), len(demands))
    if all(isinstance(d, FiniteDiscrete) for d in demands) or (
        coerce and all(d.has_finite_support() for d in demands)
    ):
        acc = demands[0].to_finite_discrete()
        for d in demands[1:]:
            acc = _convolve(acc, d.to_finite_discrete())
        return PartialSum(acc, len(demands))
    raise UnsupportedCombination(
        "cannot sum demands of families " + ", ".join(sorted({str(k) for k in keys}))
    )


Distribution = Union[DemandDistribution, PartialSum]


def cdf(dist: Distribution, t):
    """P(X <= t) of a demand or a partial sum."""
    return dist.cdf(t)


def failure_interval_mass(prefix: Distribution, nxt: DemandDistribution, l: int, Q: float) -> float:
    """P(prefix <= lQ < prefix + next): the l-th restock happens at ``nxt``."""
    if l < 1:
        raise ValueError("restock index l must be >= 1")
    base = prefix.dist if isinstance(prefix, PartialSum) else prefix
    if isinstance(base, FiniteDiscrete) and base.values == (0.0,):
        # an empty prefix: the sum is the next demand alone, whatever its family
        total = PartialSum(nxt, 1)
    else:
        total = sum_of([base, nxt])
    threshold = l * Q
    strict = not isinstance(base, Normal)
    return clamp_probability(float(cdf(prefix, threshold)) - float(cdf(total, threshold)), strict=strict)


def _fold(unit: DemandDistribution, s: int) -> DemandDistribution:
    if s == 0:
        return point_mass(0.0)
    if isinstance(unit, FiniteDiscrete):
        acc = unit
        for _ in range(s - 1):
            acc = _convolve(acc, unit)
        return acc
    return _closed_sum([unit] * s)


def unit_failure_pmf(unit: DemandDistribution, s: int, u: float) -> float:
    """Probability that exactly ``s`` i.i.d. copies of ``unit`` are needed
    for their running sum to first exceed ``u``."""
    if s < 1:
        raise ValueError("s must be >= 1")
    before = float(_fold(unit, s - 1).cdf(u))
    after = float(_fold(unit, s).cdf(u))
    return clamp_probability(before - after, strict=not isinstance(unit, Normal))


# --------------------------------------------------------------------------
# batched prefix evaluation used by the recourse kernels


def prefix_cdf_matrix(demands: Sequence[DemandDistribution], thresholds) -> np.ndarray:
    """Matrix ``F[j, k] = P(xi_1 + ... + xi_j <= thresholds[k])`` for j = 0..t.

    Row 0 is the empty sum (a point mass at zero).
    """
    thresholds = np.atleast_1d(np.asarray(thresholds, dtype=float))
    t = len(demands)
    out = np.empty((t + 1, len(thresholds)))
    out[0] = (thresholds + _SUPPORT_SLACK >= 0).astype(float)
    if t == 0:
        return out
    keys = {d.sum_key() for d in demands}
    first = demands[0]
    if len(keys) == 1 and not isinstance(first, FiniteDiscrete):
        col = thresholds[None, :]
        if isinstance(first, Poisson):
            lam = np.cumsum([d.lam for d in demands])[:, None]
            out[1:] = _poisson_cdf(lam, col)
        elif isinstance(first, Normal):
            mu = np.cumsum([d.mu for d in demands])[:, None]
            var = np.cumsum([d.var_ for d in demands])[:, None]
            out[1:] = _normal_cdf(mu, var, col)
        elif isinstance(first, Binomial):
            n = np.cumsum([d.n for d in demands])[:, None]
            out[1:] = _binomial_cdf(n, first.p, col)
        elif isinstance(first, Erlang):
            n = np.cumsum([d.n for d in demands])[:, None]
            out[1:] = _erlang_cdf(n, first.rate, col)
        elif isinstance(first, NegativeBinomial):
            r = np.cumsum([d.r for d in demands])[:, None]
            out[1:] = _negbin_cdf(r, first.p, col)
        else:  # pragma: no cover - every closed family is listed above
            raise UnsupportedCombination(first.family)
        return out
    acc = None
    for j, d in enumerate(demands, start=1):
        if isinstance(d, FiniteDiscrete) or d.has_finite_support():
            table = d.to_finite_discrete()
        else:
            raise UnsupportedCombination(
                "cannot sum demands of families " + ", ".join(sorted({str(k) for k in keys}))
            )
        acc = table if acc is None else _convolve(acc, table)
        out[j] = acc.cdf(thresholds)
    return out
