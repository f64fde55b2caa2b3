import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from vrpsd.instance import make_instance
from vrpsd.monotonicity import (
    MARGIN_TOLERANCE,
    SetTooLarge,
    Verdict,
    certify_family,
    certify_instance,
    check_condition_enumerative,
    check_sufficient_condition,
    condition_margin,
    verify_normal_grid,
)
from vrpsd.stochastic import Binomial, Erlang, NegativeBinomial, Normal, Poisson, failure_interval_mass, sum_of


def _reproduce(witness, inst):
    """LHS - RHS of the inequality recomputed through interval masses."""
    a, b, rest, l = witness
    Q = inst.capacity
    base = inst.demands(rest)
    lhs = failure_interval_mass(sum_of(base + [inst.demand(a)], coerce=True), inst.demand(b), l, Q)
    rhs = failure_interval_mass(sum_of(base, coerce=True), inst.demand(b), l, Q)
    return lhs - rhs


def test_poisson_counterexample_witness(prop9):
    cert = check_condition_enumerative({1, 2, 3}, prop9, 3)
    assert cert.verdict is Verdict.VIOLATED
    assert cert.witness == (1, 3, (2,), 1)
    assert _reproduce(cert.witness, prop9) < MARGIN_TOLERANCE
    assert cert.margin == pytest.approx(_reproduce(cert.witness, prop9), abs=1e-12)


def test_discrete_counterexample_violated(prop10):
    cert = check_condition_enumerative({1, 2, 3}, prop10, 3)
    assert cert.verdict is Verdict.VIOLATED
    assert _reproduce(cert.witness, prop10) < MARGIN_TOLERANCE
    assert certify_instance(prop10).verdict is Verdict.VIOLATED


def test_enumeration_guard():
    inst = make_instance([Poisson(1)] * 16, 100)
    with pytest.raises(SetTooLarge):
        check_condition_enumerative(inst.customer_ids, inst)


def test_family_rules():
    poisson = make_instance([Poisson(4), Poisson(6)], 10)
    assert certify_family({1, 2}, poisson).verdict is Verdict.CERTIFIED_BY_FAMILY
    normal = make_instance([Normal(3, 3), Normal(4, 4)], 10)
    assert certify_family({1, 2}, normal).verdict is Verdict.CERTIFIED_BY_FAMILY
    hetero = make_instance([Normal(3, 3), Normal(4, 1)], 10)
    assert certify_family({1, 2}, hetero).verdict is Verdict.UNKNOWN
    over = make_instance([Poisson(8), Poisson(6)], 10)
    assert certify_family({1, 2}, over).verdict is Verdict.UNKNOWN
    binom = make_instance([Binomial(4, 0.5), Binomial(6, 0.5)], 10)
    assert certify_family({1, 2}, binom).verdict is Verdict.CERTIFIED_BY_FAMILY
    erl = make_instance([Erlang(2, 0.5), Erlang(3, 0.5)], 10)
    assert certify_family({1, 2}, erl).verdict is Verdict.CERTIFIED_BY_FAMILY
    nb = make_instance([NegativeBinomial(2, 0.5), NegativeBinomial(3, 0.5)], 10)
    assert certify_family({1, 2}, nb).verdict is Verdict.CERTIFIED_BY_FAMILY
    mixed = make_instance([Poisson(2), Normal(3, 3)], 10)
    assert certify_family({1, 2}, mixed).verdict is Verdict.UNKNOWN


def test_certify_instance():
    assert certify_instance(make_instance([Poisson(4), Poisson(6), Poisson(9)], 10)).is_monotone
    mixed = make_instance([Poisson(2), Normal(3, 3)], 10)
    assert certify_instance(mixed).verdict is Verdict.UNKNOWN
    assert check_condition_enumerative({1, 2}, mixed).verdict is Verdict.UNKNOWN


def test_normal_grid_passes_at_low_dispersion():
    rep = verify_normal_grid(40, (1, 10), 1 / 9, (1, 2, 3))
    assert rep.ok and rep.passed > 0


def test_normal_grid_deterministic():
    assert verify_normal_grid(20, (1, 10), 0.0, (1, 2, 3)).ok


def test_normal_grid_reports_violations_beyond_capacity():
    rep = verify_normal_grid(40, (1, 10), 1.0, (1, 2, 3), max_load=60)
    assert rep.failed > 0
    mt, ma, mb, l = rep.worst_point
    assert mt + ma + mb > 40


def test_sufficient_condition_examples():
    bern = Binomial(1, 0.4)
    assert check_sufficient_condition(3, 2, 3, bern, 4, 3).passed
    assert check_sufficient_condition(3, 0, 3, bern, 4, 3).worst_margin == pytest.approx(0.0, abs=1e-15)
    expo = Erlang(1, 1.0)
    assert check_sufficient_condition(2, 2, 2, expo, 8, 3).passed


def test_certificate_record():
    inst = make_instance([Poisson(5), Poisson(15), Poisson(10)], 20)
    rec = check_condition_enumerative({1, 2, 3}, inst).to_record()
    assert rec["verdict"] == "Violated" and rec["witness"]["subset"] == [2]


@given(st.lists(st.floats(0.1, 6.0), min_size=2, max_size=5), st.integers(0, 3))
def test_family_certificate_agrees_with_enumeration(lams, slack):
    Q = float(np.ceil(sum(lams))) + slack
    inst = make_instance([Poisson(v) for v in lams], Q)
    assert certify_family(inst.customer_ids, inst).verdict is Verdict.CERTIFIED_BY_FAMILY
    assert check_condition_enumerative(inst.customer_ids, inst, 3).verdict is not Verdict.VIOLATED


@given(st.lists(st.integers(1, 10), min_size=2, max_size=4))
def test_normal_family_agrees_with_enumeration(mus):
    Q = float(sum(mus))
    inst = make_instance([Normal(float(m), float(m)) for m in mus], Q)
    assert certify_family(inst.customer_ids, inst).verdict is Verdict.CERTIFIED_BY_FAMILY
    cert = check_condition_enumerative(inst.customer_ids, inst, 3)
    assert cert.verdict is not Verdict.VIOLATED, cert.witness


def test_condition_margin_zero_for_empty_effect():
    inst = make_instance([Poisson(0.0001), Poisson(3)], 10)
    assert condition_margin((), 1, 2, 1, inst) == pytest.approx(0.0, abs=1e-4)
