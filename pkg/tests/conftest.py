import os
import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

from vrpsd.instance import make_instance  # noqa: E402
from vrpsd.stochastic import FiniteDiscrete, Poisson, point_mass  # noqa: E402

settings.register_profile("default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def star_cost(depot_costs, inner: float = 1.0) -> np.ndarray:
    """Symmetric matrix with the given depot costs and a constant between customers."""
    n = len(depot_costs)
    c = np.full((n + 1, n + 1), float(inner))
    c[0, 1:] = c[1:, 0] = depot_costs
    np.fill_diagonal(c, 0.0)
    return c


def counterexample_poisson():
    """Capacity 20, Poisson means (5, 15, 10), depot costs (0, 0, 1)."""
    return make_instance([Poisson(5), Poisson(15), Poisson(10)], 20, cost=star_cost([0.0, 0.0, 1.0]))


def counterexample_discrete(c02: float = 2.0, c03: float = 3.0):
    """Capacity 20: customer 1 demands 5 surely, customers 2 and 3 demand 6 w.p. 0.9 or 16 w.p. 0.1."""
    two = FiniteDiscrete.from_dict({6: 0.9, 16: 0.1})
    return make_instance([point_mass(5), two, two], 20, cost=star_cost([1.0, c02, c03]))


def random_poisson_instance(rng: np.random.Generator, n: int, *, fleet=None, mean_hi: int = 8):
    lam = rng.integers(1, mean_hi, size=n).astype(float)
    Q = float(max(lam.max(), np.ceil(lam.sum() / rng.integers(2, 4)))) + 2
    pts = rng.uniform(0, 100, size=(n, 2))
    return make_instance([Poisson(v) for v in lam], Q, coordinates=[tuple(p) for p in pts], depot=(50.0, 50.0), fleet_sizes=fleet)


@pytest.fixture
def prop9():
    return counterexample_poisson()


@pytest.fixture
def prop10():
    return counterexample_discrete()


# one pass/fail line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE_LINES: dict[int, str] = {}


def record_acceptance(number: int, ok: bool, detail: str) -> str:
    line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
