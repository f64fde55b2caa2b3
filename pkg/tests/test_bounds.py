import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import star_cost
from oracles import min_permutation_recourse, partition_oracle
from vrpsd.bounds import (
    BoundDomainError,
    MonotonicityRequired,
    build_g_table,
    farthest_first,
    fleet_lb_vector,
    l1_single_route,
    l2_dp,
    l3_set_covering,
    lsg18_bound,
    solve_l3,
)
from vrpsd.instance import make_instance
from vrpsd.recourse import expected_recourse_path
from vrpsd.stochastic import Binomial, Normal, Poisson


def _poisson_set(rng, n, Q=None, hi=8):
    lam = rng.integers(1, hi, size=n).astype(float)
    if Q is None:
        Q = float(max(lam.max(), np.ceil(lam.sum() / 2)))
    pts = rng.uniform(0, 100, size=(n, 2))
    return make_instance([Poisson(v) for v in lam], Q, coordinates=[tuple(p) for p in pts], depot=(50.0, 50.0))


def test_farthest_first_ties_by_id():
    inst = make_instance([Poisson(1)] * 3, 5, cost=star_cost([2.0, 3.0, 2.0]))
    assert farthest_first({1, 2, 3}, inst) == (2, 1, 3)


def test_l1_singleton_equals_route_recourse():
    inst = make_instance([Poisson(4)], 5, cost=star_cost([5.0]))
    assert l1_single_route({1}, inst) == pytest.approx(expected_recourse_path((1,), inst))


def test_l1_exact_on_monotone_sets():
    rng = np.random.default_rng(0)
    for _ in range(20):
        n = int(rng.integers(2, 6))
        lam = rng.integers(1, 6, size=n).astype(float)
        inst = _poisson_set(rng, n, Q=float(lam.sum()))
        inst = make_instance([Poisson(v) for v in lam], float(lam.sum()), cost=inst.cost)
        S = inst.customer_ids
        assert l1_single_route(S, inst) == pytest.approx(min_permutation_recourse(S, inst), abs=1e-9)


def test_l1_domain_errors(prop9):
    with pytest.raises(BoundDomainError):
        l1_single_route({1, 2, 3}, prop9)  # expected demand 30 > 20
    inst = make_instance([Poisson(2), Normal(3, 0.5)], 10)
    with pytest.raises(MonotonicityRequired):
        l1_single_route({1, 2}, inst)


def test_dp_rejects_unsupported_inputs():
    with pytest.raises(BoundDomainError):
        l2_dp({1}, 1, make_instance([Binomial(3, 0.5)], 5))
    with pytest.raises(BoundDomainError):
        l2_dp({1}, 1, make_instance([Poisson(2.5)], 5))
    with pytest.raises(BoundDomainError):
        l2_dp({1}, 0, make_instance([Poisson(2)], 5))


def test_g_table_structure():
    rng = np.random.default_rng(1)
    inst = _poisson_set(rng, 4, Q=10)
    g = build_g_table(inst.customer_ids, inst)
    assert g.values[len(g.order), 0] == 0.0
    assert np.all(np.isinf(g.values[len(g.order), 1:]))
    # a load that no subset of the stages can reach is infinite
    reachable = {sum(c) for k in range(5) for c in itertools.combinations(g.mus, k)}
    for q in range(g.Q + 1):
        assert np.isfinite(g.values[0, q]) == (q in reachable)


def test_g_table_matches_subset_minimum():
    rng = np.random.default_rng(2)
    inst = _poisson_set(rng, 5, Q=14)
    g = build_g_table(inst.customer_ids, inst)
    best: dict[int, float] = {}
    for k in range(1, 6):
        for sub in itertools.combinations(inst.customer_ids, k):
            q = int(inst.load(sub))
            if q <= g.Q:
                v = expected_recourse_path(farthest_first(sub, inst), inst)
                best[q] = min(best.get(q, math.inf), v)
    for q, v in best.items():
        assert g.values[0, q] == pytest.approx(v, abs=1e-9)
        assert math.isclose(
            expected_recourse_path(farthest_first(g.best_subset(0, q), inst), inst), v, abs_tol=1e-9
        )


def test_zero_duals_equal_no_duals():
    rng = np.random.default_rng(3)
    inst = _poisson_set(rng, 4, Q=10)
    a = build_g_table(inst.customer_ids, inst).values
    b = build_g_table(inst.customer_ids, inst, duals={i: 0.0 for i in inst.customer_ids}).values
    assert np.array_equal(a, b)


def test_l2_single_vehicle_is_g_at_total():
    rng = np.random.default_rng(4)
    inst = _poisson_set(rng, 4, Q=30)
    g = build_g_table(inst.customer_ids, inst)
    assert l2_dp(inst.customer_ids, 1, inst) == pytest.approx(g.values[0, int(inst.total_mean)])
    assert l2_dp({1, 2}, 1, make_instance([Poisson(6), Poisson(6)], 10)) == math.inf


def test_l3_singletons_when_one_path_per_customer():
    rng = np.random.default_rng(5)
    inst = _poisson_set(rng, 4, Q=10)
    singles = sum(expected_recourse_path((i,), inst) for i in inst.customer_ids)
    assert l3_set_covering(inst.customer_ids, 4, inst) <= singles + 1e-6
    with pytest.raises(BoundDomainError):
        l3_set_covering(inst.customer_ids, 5, inst)


def test_lsg18_edge_cases():
    inst = make_instance([Poisson(2)], 10, cost=star_cost([4.0]))
    assert lsg18_bound((), 1, inst) == 0.0
    surv = 1 - float(Poisson(2).cdf(10))
    assert lsg18_bound({1}, 1, inst, 0.0) == pytest.approx(2 * 4.0 * surv)
    assert lsg18_bound({1}, 1, inst) == 0.0  # below the truncation threshold


def test_fleet_vector_non_increasing():
    rng = np.random.default_rng(6)
    inst = _poisson_set(rng, 6, Q=12)
    inst = make_instance(
        [c.demand for c in inst.customers], 12, cost=inst.cost, fleet_sizes=range(1, 6)
    )
    vec = fleet_lb_vector(inst)
    ms = sorted(vec)
    need = inst.min_vehicles(inst.customer_ids)
    for m in ms:
        if m < need:
            assert vec[m] == math.inf
    finite = [vec[m] for m in ms if math.isfinite(vec[m])]
    assert all(a >= b - 1e-6 for a, b in zip(finite, finite[1:]))


def _check_bounds_and_pricing(inst, S, m):
    want = partition_oracle(S, m, inst)
    if not math.isfinite(want):
        return
    assert l2_dp(S, m, inst) <= want + 1e-6
    assert lsg18_bound(S, m, inst) <= want + 1e-6
    res = solve_l3(S, m, inst)
    assert res.value <= want + 1e-6
    # at convergence no capacity-feasible path prices out
    pi, sigma = res.pool.cover_duals, res.pool.cardinality_dual
    for k in range(1, len(S) + 1):
        for sub in itertools.combinations(sorted(S), k):
            if inst.load(sub) > inst.capacity + 1e-9:
                continue
            rc = expected_recourse_path(farthest_first(sub, inst), inst) - sum(pi[i] for i in sub) - sigma
            assert rc >= -1e-6


@given(n=st.integers(2, 6), seed=st.integers(0, 10**6), extra=st.integers(0, 1))
def test_bounds_below_partition_oracle(n, seed, extra):
    rng = np.random.default_rng(seed)
    inst = _poisson_set(rng, n, hi=6)
    S = inst.customer_ids
    m = min(n, inst.min_vehicles(S) + extra)
    _check_bounds_and_pricing(inst, S, m)
