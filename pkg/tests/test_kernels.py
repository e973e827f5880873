import numpy as np
import pytest

from mcaprice import _accel
from mcaprice import _kernels as K
from mcaprice.utility import UtilityFunction, pack

USERS = [UtilityFunction.alpha_fair(5.0, 0.4), UtilityFunction.logarithmic(4.0, 1.5),
         UtilityFunction.exponential(0.8), UtilityFunction.quadratic(-0.5, 6.0)]


def _py(f):
    return getattr(f, "py_func", f)


@pytest.mark.skipif(not _accel.NUMBA_ENABLED, reason="numba disabled")
def test_compiled_and_python_kernels_agree():
    fam, pa, pb = pack(USERS)
    for q in (0.3, 2.0, 7.5):
        assert K.inverse_demand(fam, pa, pb, q) == pytest.approx(_py(K.inverse_demand)(fam, pa, pb, q),
                                                                rel=1e-13)
    W = np.array([[1.0, 2.0, 1.5, 3.0]] * 4)
    C = np.array([1.0, 0.5, 2.0, 1.0])
    tie = np.broadcast_to(np.arange(4.0), (4, 4)).copy()
    x1, _, _ = K.solve_traffic(0, fam, pa, pb, W, C, tie, 1e-10, 300, True)
    x2, _, _ = _py(K.solve_traffic)(0, fam, pa, pb, W, C, tie, 1e-10, 300, True)
    assert np.allclose(x1, x2, atol=1e-9)
    costs, caps = np.array([1.0, 2.0]), np.array([1.0, 1.0])
    for q in (0.2, 0.9999995, 1.0, 1.3):
        assert K.smooth_cost(costs, caps, q, 1e-3) == pytest.approx(_py(K.smooth_cost)(costs, caps, q, 1e-3))


def test_inverse_demand_roundtrip():
    fam, pa, pb = pack(USERS)
    for q in (0.01, 0.5, 3.0, 12.0):
        p = K.inverse_demand(fam, pa, pb, q)
        assert K.agg_demand(fam, pa, pb, p) == pytest.approx(q, rel=1e-10)


def test_segment_cost_is_greedy_fill():
    c, k = np.array([1.0, 3.0, 4.0]), np.array([2.0, 1.0, 5.0])
    assert K.seg_cost(c, k, 0.0) == 0.0
    assert K.seg_cost(c, k, 1.5) == pytest.approx(1.5)
    assert K.seg_cost(c, k, 2.5) == pytest.approx(2.0 + 1.5)
    assert K.seg_cost(c, k, 4.0) == pytest.approx(2.0 + 3.0 + 4.0)


def test_smoothed_cost_is_c1_convex_and_close():
    c, k = np.array([1.0, 3.0, 4.0]), np.array([2.0, 1.0, 5.0])
    eps = 0.05
    q = np.linspace(0.0, 8.0, 8001)
    v = np.array([K.smooth_cost(c, k, x, eps) for x in q])
    d = np.array([K.smooth_cost_d1(c, k, x, eps) for x in q])
    exact = np.array([K.seg_cost(c, k, x) for x in q])
    assert np.max(np.abs(v - exact)) <= eps * (4.0 - 1.0)
    assert np.all(np.diff(v, 2) >= -1e-12)
    # slope changes at rate at most (s2 - s1) / (2 eps) per unit output
    assert np.max(np.abs(np.diff(d))) <= 2.0 / (2 * eps) * (q[1] - q[0]) * (1 + 1e-9)
    assert np.allclose(np.gradient(v, q)[1:-1], d[1:-1], atol=1e-2)
    # away from kinks the smoothing is exact
    assert K.smooth_cost(c, k, 1.0, eps) == pytest.approx(1.0)
    assert K.smooth_cost_d1(c, k, 2.5, eps) == pytest.approx(3.0)


def test_route_min_cost_prefers_cheap_then_low_tie():
    eu = np.array([0, 0, 1, 1], dtype=np.int64)
    el = np.array([0, 1, 0, 1], dtype=np.int64)
    c1 = np.array([1.0, 1.0, 1.0, 1.0])
    c2 = np.array([0.0, 1.0, 0.0, 1.0])
    flow, unrouted = K.route_min_cost(eu, el, c1, c2, np.array([0.6, 0.8]), np.array([1.0, 1.0]), 2, 2)
    assert unrouted == pytest.approx(0.0)
    load0 = flow[0] + flow[2]
    assert load0 == pytest.approx(1.0)
