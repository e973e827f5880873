import numpy as np
import pytest

from mcaprice import ConvexityError, RegimeError, Scenario, UtilityFunction, solve_ft, solve_ropm, solve_swm
from mcaprice.cooperative import check_corollary2, recover_prices

import oracles as O
from conftest import two_user


def test_example_cooperative_profit(ex2):
    r = solve_ropm(ex2)
    assert r.total_profit == pytest.approx(5 / 3, abs=1e-9)
    # both users buy 1/2 on the cheap downlink at delivered price 4 / (3/2) = 8/3
    assert np.allclose(r.x, [[0.5, 0.0], [0.5, 0.0]], atol=1e-8)
    assert np.allclose(r.p_star, [8 / 3, 8 / 3], atol=1e-8)
    assert np.allclose(r.per_mno_profit, [5 / 3, 0.0], atol=1e-8)
    assert r.kkt_residual <= 1e-6


def test_example_welfare_and_free_tethering(ex2):
    w = solve_swm(ex2)
    assert w.welfare == pytest.approx(8 * np.log(2) - 3.0, abs=1e-9)
    ft = solve_ft(ex2)
    assert ft.total_profit == pytest.approx(5 / 3, abs=1e-9)
    assert np.all(ft.tethering == 0.0)
    assert np.allclose(ft.p_star, 8 / 3)


def _random_two_user(rng):
    theta = rng.uniform(1.0, 8.0, 2)
    C = rng.uniform(0.2, 3.0, 2)
    e = rng.uniform(0.0, 2.0, 2)
    return two_user(theta=theta, C=C, e=e, c=rng.uniform(0.0, 0.3)), theta, C


def test_cooperative_matches_dual_oracle(rng):
    for _ in range(25):
        s, theta, C = _random_two_user(rng)
        r = solve_ropm(s)
        val, y, _ = O.upm_dual_2x2(theta, [1.0, 1.0], s.delivered_cost, C, revenue=True)
        assert r.total_profit == pytest.approx(val, abs=1e-8)
        assert np.allclose(r.totals, y, atol=1e-6)


def test_welfare_matches_dual_oracle(rng):
    for _ in range(25):
        s, theta, C = _random_two_user(rng)
        w = solve_swm(s)
        val, y, _ = O.upm_dual_2x2(theta, [1.0, 1.0], s.delivered_cost, C)
        assert w.welfare == pytest.approx(val, abs=1e-8)
        assert np.allclose(w.totals, y, atol=1e-6)


@pytest.mark.filterwarnings("ignore:uniform-price revenue")
def test_free_tethering_matches_uniform_price_oracle(rng):
    for _ in range(15):
        s, theta, C = _random_two_user(rng)
        ft = solve_ft(s)
        v, q, price = O.uniform_price_log(theta, [1.0, 1.0], s.downlink_cost, C)
        assert ft.total_profit == pytest.approx(v, abs=1e-8)
        assert ft.p_star[0] == pytest.approx(price, rel=1e-6)


@pytest.mark.filterwarnings("ignore:uniform-price revenue")
def test_cooperation_dominates_free_tethering(rng):
    for _ in range(15):
        s, *_ = _random_two_user(rng)
        assert solve_ropm(s).total_profit >= solve_ft(s).total_profit - 1e-9


def test_free_tethering_optimal_under_common_alpha(rng):
    for _ in range(10):
        n = 4
        us = tuple(UtilityFunction.alpha_fair(t, 0.4) for t in rng.uniform(1.0, 10.0, n))
        s = Scenario(2, [0, 0, 1, 1], rng.uniform(0.5, 3.0, n), [1.0, 1.0, 2.0, 2.0], [0.5] * n, None, us)
        assert check_corollary2(s)
        assert solve_ft(s).total_profit == pytest.approx(solve_ropm(s).total_profit, rel=1e-7)


def test_free_tethering_optimality_conditions():
    assert not check_corollary2(two_user())
    s = Scenario(2, [0, 1], [1, 1], [1, 2], [0.5, 0.5], None,
                 (UtilityFunction.alpha_fair(2.0, 0.4), UtilityFunction.alpha_fair(3.0, 0.5)))
    assert not check_corollary2(s)


def test_nonconcave_revenue():
    s = Scenario(2, [0, 1], [3.0, 3.0], [0.1, 0.2], [0.0, 0.0], None,
                 (UtilityFunction.exponential(1.0),) * 2)
    with pytest.raises(ConvexityError):
        solve_ropm(s)
    with pytest.warns(RuntimeWarning):
        r = solve_ropm(s, allow_nonconvex=True)
    assert not r.convex and r.total_profit > 0


def test_free_tethering_needs_zero_wifi():
    with pytest.raises(RegimeError):
        solve_ft(two_user(wifi=[[0.0, 0.1], [0.1, 0.0]]))


def test_recovered_prices(ex2):
    x = np.array([[0.5, 0.0], [0.0, 0.0]])
    p, h, unc = recover_prices(ex2, x)
    assert p[0] == pytest.approx(4 / 1.5)
    assert p[1] == pytest.approx(4.0)
    assert unc.tolist() == [[False, True], [True, True]]
    assert np.all(h >= 0)
