"""Brute-force reference solvers used only by the tests.

They share no code with the package solvers: utilities are evaluated from
their closed forms, routing costs by enumerating LP vertices and optima by
grid search with zooming or through the Lagrangian dual.
"""

import itertools
import math

import numpy as np


def log_u(theta, a=1.0):
    return lambda y: theta * np.log(a + y)


def revenue_log(theta, a=1.0):
    """``y U'(y)`` for the logarithmic utility."""
    return lambda y: theta * y / (a + y)


def route_cost_2x2(W, C, y1, y2):
    """Cheapest cost of carrying totals (y1, y2) on two links (inf if infeasible).

    Variables ``a = x[0, 0]`` and ``b = x[1, 0]``; the remaining traffic uses
    link 1. The optimum of this 2-variable LP sits on a vertex of
    ``{0 <= a <= y1, 0 <= b <= y2, a + b <= C0, y1 - a + y2 - b <= C1}``.
    Works elementwise on arrays of totals.
    """
    y1 = np.asarray(y1, float)
    y2 = np.asarray(y2, float)
    z = np.zeros_like(y1 + y2)
    lines = [((1, 0), z), ((1, 0), y1 + z), ((0, 1), z), ((0, 1), y2 + z),
             ((1, 1), C[0] + z), ((1, 1), y1 + y2 - C[1])]
    tol = 1e-12 * (1 + y1 + y2 + C[0] + C[1])
    best = np.full(z.shape, np.inf)
    with np.errstate(invalid="ignore"):
        for (n1, r1), (n2, r2) in itertools.combinations(lines, 2):
            det = n1[0] * n2[1] - n1[1] * n2[0]
            if det == 0:
                continue
            a = (r1 * n2[1] - n1[1] * r2) / det
            b = (n1[0] * r2 - r1 * n2[0]) / det
            ok = (a >= -tol) & (a <= y1 + tol) & (b >= -tol) & (b <= y2 + tol) \
                & (a + b <= C[0] + tol) & (y1 + y2 - a - b <= C[1] + tol)
            cost = np.zeros_like(z)
            for (i, j), v in (((0, 0), a), ((0, 1), y1 - a), ((1, 0), b), ((1, 1), y2 - b)):
                if math.isinf(W[i][j]):
                    ok &= v <= tol
                else:
                    cost += W[i][j] * np.maximum(v, 0.0)
            best = np.where(ok, np.minimum(best, cost), best)
    return best


def _log_surplus(theta, a, p):
    """``max_y theta ln(a + y) - p y`` measured from ``y = 0`` (vectorized in p)."""
    y = np.maximum(theta / p - a, 0.0)
    with np.errstate(invalid="ignore"):
        return theta * np.log((a + y) / a) - np.where(y > 0, p * y, 0.0)


def _maximize_1d_batch(f, k, top, n=21, stop=1e-14):
    """``k`` independent 1-D zoom searches on ``[0, top]``; ``f`` maps a (k, n) grid to values."""
    lo = np.zeros(k)
    hi = np.full(k, float(top))
    bv = np.full(k, -np.inf)
    bx = np.zeros(k)
    rows = np.arange(k)
    while True:
        g = lo[:, None] + (hi - lo)[:, None] * np.linspace(0.0, 1.0, n)[None, :]
        v = f(g)
        j = np.argmax(v, axis=1)
        better = v[rows, j] > bv
        bv = np.where(better, v[rows, j], bv)
        bx = np.where(better, g[rows, j], bx)
        step = (hi - lo) / (n - 1)
        lo, hi = np.maximum(0.0, bx - 2 * step), np.minimum(top, bx + 2 * step)
        if np.all(hi - lo < stop * np.maximum(1.0, np.abs(bx))):
            return bv, bx


def _log_revenue_surplus(theta, a, p):
    """``max_y theta y / (a + y) - p y`` (revenue of a logarithmic user)."""
    y = np.maximum(np.sqrt(theta * a / p) - a, 0.0)
    with np.errstate(invalid="ignore"):
        return theta * y / (a + y) - np.where(y > 0, p * y, 0.0)


def upm_dual_2x2(theta, a, W, C, revenue=False):
    """Optimum of ``sum_i F_i(y_i) - sum W x`` on two links via its dual.

    ``F_i`` is the logarithmic utility, or with ``revenue=True`` the revenue
    ``y U'(y)`` (the cooperative problem). Minimizes the convex dual
    ``sum_i phi_i(min_j W[i, j] + lam_j) + lam . C``
    over ``lam >= 0`` by nested one-dimensional searches (the partial minimum
    over ``lam_1`` is convex in ``lam_0``), then reads the totals from the
    users' demands at the dual prices. Returns ``(value, totals, lam)``.
    """
    theta = np.asarray(theta, float)
    a = np.asarray(a, float)
    W = np.asarray(W, float)
    C = np.asarray(C, float)
    top = float(np.max(theta / a)) + 1.0
    surplus = _log_revenue_surplus if revenue else _log_surplus

    def g(l0, l1):
        val = l0 * C[0] + l1 * C[1]
        for i in range(len(theta)):
            p = np.minimum(W[i, 0] + l0, W[i, 1] + l1)
            val = val + surplus(theta[i], a[i], p)
        return val

    def inner(l0):
        l0 = np.atleast_1d(l0)
        return _maximize_1d_batch(lambda l1: -g(l0[:, None], l1), len(l0), top)

    v, l0 = maximize_1d(lambda l0s: inner(l0s)[0], 0.0, top, n=21, stop=1e-14)
    l1 = float(inner(l0)[1][0])
    p = np.minimum(W[:, 0] + l0, W[:, 1] + l1)
    with np.errstate(divide="ignore"):
        y = np.maximum(np.sqrt(theta * a / p) - a if revenue else theta / p - a, 0.0)
    return -v, y, np.array([l0, l1])


def uniform_price_log(theta, a, seg_costs, seg_caps):
    """Best uniform delivered price for logarithmic users by 1-D search.

    Aggregate demand at price ``p`` is ``sum_i max(theta_i / p - a_i, 0)``;
    the price for a quantity ``Q`` is found by bisection on that sum and
    downlinks are filled cheapest first. Returns ``(profit, Q, price)``.
    """
    theta = np.asarray(theta, float)
    a = np.asarray(a, float)
    order = np.argsort(seg_costs)
    c = np.asarray(seg_costs, float)[order]
    k = np.asarray(seg_caps, float)[order]

    def price(q):
        lo, hi = 1e-300, float(np.max(theta / a))
        for _ in range(2000):
            m = 0.5 * (lo + hi)
            if np.sum(np.maximum(theta / m - a, 0.0)) > q:
                lo = m
            else:
                hi = m
            if hi - lo <= 4e-16 * hi:
                break
        return 0.5 * (lo + hi)

    def cost(q):
        left, total = q, 0.0
        for ci, ki in zip(c, k):
            take = min(left, ki)
            total += ci * take
            left -= take
        return total

    def profit(qs):
        return np.array([q * price(q) - cost(q) for q in np.atleast_1d(qs)])

    v, q = maximize_1d(profit, 0.0, float(k.sum()), n=101, stop=1e-12)
    return v, q, price(q)


def maximize_1d(f, lo, hi, n=201, stop=1e-13):
    """Maximize a vectorized ``f`` on ``[lo, hi]``; returns ``(value, argmax)``."""
    best = (-math.inf, None)
    while True:
        g = np.linspace(lo, hi, n)
        v = np.asarray(f(g), float)
        k = int(np.argmax(v))
        if v[k] > best[0]:
            best = (float(v[k]), float(g[k]))
        step = (hi - lo) / (n - 1)
        lo, hi = max(lo, best[1] - 2 * step), min(hi, best[1] + 2 * step)
        if hi - lo < stop * max(1.0, abs(best[1])):
            return best


def cournot_2(price, costs, caps, q0=(0.0, 0.0), rounds=200):
    """Best-response iteration with exact (unsmoothed) linear costs, one segment per MNO."""
    q = list(q0)
    for _ in range(rounds):
        old = list(q)
        for n in range(2):
            other = q[1 - n]
            q[n] = maximize_1d(lambda x: x * price(x + other) - costs[n] * x, 0.0, caps[n])[1]
        if max(abs(q[0] - old[0]), abs(q[1] - old[1])) < 1e-12:
            break
    return q
