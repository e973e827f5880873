import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mcaprice import DomainError, Family, UtilityFunction
from mcaprice import utility as ut

FAMILIES = [
    UtilityFunction.alpha_fair(550.0, 0.4),
    UtilityFunction.alpha_fair(2.0, 0.8),
    UtilityFunction.logarithmic(4.0),
    UtilityFunction.logarithmic(3.0, 2.5),
    UtilityFunction.exponential(0.7),
    UtilityFunction.quadratic(-0.5, 3.0),
]


@pytest.mark.parametrize("u", FAMILIES, ids=lambda u: u.family.value)
def test_derivatives_match_finite_differences(u):
    for x in (0.1, 0.7, 1.9):
        h = 1e-5
        fd1 = (u.value(x + h) - u.value(x - h)) / (2 * h)
        fd2 = (u.marginal(x + h) - u.marginal(x - h)) / (2 * h)
        fd3 = (u.marginal_d1(x + h) - u.marginal_d1(x - h)) / (2 * h)
        assert u.marginal(x) == pytest.approx(fd1, rel=1e-6)
        assert u.marginal_d1(x) == pytest.approx(fd2, rel=1e-6, abs=1e-9)
        assert u.marginal_d2(x) == pytest.approx(fd3, rel=1e-5, abs=1e-9)


@pytest.mark.parametrize("u", FAMILIES, ids=lambda u: u.family.value)
def test_demand_inverts_marginal(u):
    for x in (0.05, 0.4, 1.2):
        p = u.marginal(x)
        assert u.demand(p) == pytest.approx(x, rel=1e-10)


def test_closed_form_demands():
    assert UtilityFunction.alpha_fair(8.0, 0.5).demand(2.0) == pytest.approx(16.0)
    assert UtilityFunction.logarithmic(4.0).demand(2.0) == pytest.approx(1.0)
    assert UtilityFunction.exponential(2.0).demand(0.5) == pytest.approx(math.log(4.0) / 2.0)
    assert UtilityFunction.quadratic(-1.0, 4.0).demand(2.0) == pytest.approx(1.0)


def test_demand_zero_above_marginal_at_zero():
    u = UtilityFunction.logarithmic(4.0)
    assert u.marginal_at_zero() == 4.0
    assert u.demand(4.0) == 0.0
    assert u.demand(10.0) == 0.0
    assert UtilityFunction.alpha_fair(1.0, 0.4).marginal_at_zero() == math.inf


def test_prudence_closed_forms():
    assert UtilityFunction.alpha_fair(3.0, 0.4).prudence(2.0) == pytest.approx(1.4)
    assert UtilityFunction.logarithmic(3.0, 1.0).prudence(1.0) == pytest.approx(1.0)
    assert UtilityFunction.exponential(0.5).prudence(2.0) == pytest.approx(1.0)
    assert UtilityFunction.quadratic(-1.0, 4.0).prudence(1.0) == pytest.approx(0.0)


def test_revenue_concavity_check():
    assert UtilityFunction.alpha_fair(3.0, 0.9).check_assumption2(100.0)
    assert UtilityFunction.logarithmic(3.0).check_assumption2(1e6)
    assert UtilityFunction.exponential(1.0).check_assumption2(2.0)
    assert not UtilityFunction.exponential(1.0).check_assumption2(3.0)


@pytest.mark.parametrize("bad", [
    lambda: UtilityFunction.alpha_fair(1.0, 0.0),
    lambda: UtilityFunction.alpha_fair(1.0, 1.0),
    lambda: UtilityFunction.alpha_fair(-1.0, 0.5),
    lambda: UtilityFunction.logarithmic(1.0, 0.0),
    lambda: UtilityFunction.exponential(0.0),
    lambda: UtilityFunction.quadratic(1.0, 1.0),
    lambda: UtilityFunction.quadratic(-1.0, 0.0),
])
def test_invalid_parameters_rejected(bad):
    with pytest.raises(DomainError):
        bad()


def test_domain_errors():
    u = UtilityFunction.logarithmic(4.0)
    with pytest.raises(DomainError):
        u.value(-1.0)
    with pytest.raises(DomainError):
        u.demand(0.0)
    with pytest.raises(DomainError):
        u.prudence(0.0)
    with pytest.raises(DomainError):
        UtilityFunction.quadratic(-1.0, 4.0).value(3.0)


def test_serialization_roundtrip():
    for u in FAMILIES:
        assert UtilityFunction.from_dict(u.to_dict()) == u
    d = {"family": "alpha_fair", "theta": 550.0, "alpha": 0.4, "xi": 3.0}
    u = UtilityFunction.from_dict(d)
    assert u.family is Family.ALPHA_FAIR
    # the additive constant does not change marginals
    assert u.marginal(2.0) == UtilityFunction.alpha_fair(550.0, 0.4).marginal(2.0)


def test_aggregate_and_inverse_demand():
    us = [UtilityFunction.logarithmic(4.0), UtilityFunction.logarithmic(4.0)]
    # sum (4/p - 1) = Q  =>  p = 8 / (Q + 2)
    for q in (0.5, 1.0, 2.0, 5.0):
        assert ut.inverse_demand(us, q) == pytest.approx(8.0 / (q + 2.0), rel=1e-12)
        assert ut.inverse_demand_slope(us, q) == pytest.approx(-8.0 / (q + 2.0) ** 2, rel=1e-8)
    assert ut.aggregate_demand(us, 2.0) == pytest.approx(2.0)


@settings(max_examples=60, deadline=None)
@given(theta=st.floats(0.5, 50.0), alpha=st.floats(0.05, 0.95),
       p1=st.floats(0.01, 20.0), p2=st.floats(0.01, 20.0))
def test_alpha_fair_demand_decreasing(theta, alpha, p1, p2):
    u = UtilityFunction.alpha_fair(theta, alpha)
    lo, hi = sorted((p1, p2))
    assert u.demand(lo) >= u.demand(hi)


@settings(max_examples=60, deadline=None)
@given(theta=st.floats(0.5, 50.0), a=st.floats(0.1, 5.0), p=st.floats(0.01, 60.0))
def test_log_demand_maximizes_surplus(theta, a, p):
    u = UtilityFunction.logarithmic(theta, a)
    d = u.demand(p)
    surplus = lambda x: u.value(x) - p * x
    for x in (0.0, d * 0.9, d * 1.1 + 1e-3):
        assert surplus(d) >= surplus(x) - 1e-9 * (1 + abs(surplus(d)))
