"""Shared separable allocation engine.

Solves

    max  sum_i F_i(y_i) - sum_{ij} W[i, j] x[i, j]
    s.t. sum_i x[i, j] <= C[j],  x >= 0,  y_i = sum_j x[i, j]

with ``F = U`` (``mode=0``) or ``F = y U'(y)`` (``mode=1``). Entries of ``W``
equal to ``inf`` are blocked links. Among optimal solutions the traffic is
routed at minimum secondary cost ``tie`` (lexicographically after ``W``).
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .errors import SolverError

UTILITY = 0
REVENUE = 1

IPM_TOL = 1e-10
IPM_MAX_ITER = 300


@dataclass
class Allocation:
    x: np.ndarray
    y: np.ndarray
    lam: np.ndarray
    mu: np.ndarray
    kkt_residual: float
    iterations: int
    method: str


def marginals(mode, fam, pa, pb, y):
    return np.array([K.f_d1(mode, fam[i], pa[i], pb[i], y[i]) for i in range(len(y))])


def certificate(mode, fam, pa, pb, W, C, x):
    """Minimal dual certificate and KKT residual of a candidate ``x``.

    ``lam_j = max(0, max_i F'_i(y_i) - W_ij)`` over open links and
    ``mu_ij = W_ij + lam_j - F'_i(y_i)``. The residual is the largest of the
    complementarity products, dual infeasibility and capacity violation.
    """
    n, m = W.shape
    y = x.sum(axis=1)
    g = marginals(mode, fam, pa, pb, y)
    open_ = np.isfinite(W) & (C[None, :] > 0)
    with np.errstate(invalid="ignore"):
        gap = np.where(open_, g[:, None] - W, -np.inf)
        lam = np.maximum(0.0, gap.max(axis=0)) if n else np.zeros(m)
        mu = np.where(open_, W + lam[None, :] - g[:, None], 0.0)
    if not np.all(np.isfinite(lam)):
        # an open link leaves a user with infinite marginal value unserved
        return lam, np.nan_to_num(mu), np.inf
    load = x.sum(axis=0)
    slack = C - load
    parts = [0.0]
    if x.size:
        parts.append(float(np.max(np.abs(mu * x))))
        parts.append(float(np.max(-np.minimum(mu, 0.0))))
    if m:
        fin = np.isfinite(lam)
        parts.append(float(np.max(np.where(fin, lam * np.maximum(slack, 0.0), 0.0))))
        parts.append(float(np.max(np.maximum(-slack, 0.0))))
    parts.append(float(np.max(-np.minimum(x, 0.0))) if x.size else 0.0)
    return lam, mu, max(parts)


def route(W, tie, totals, C):
    """Min-cost routing of per-user totals, lexicographic in ``(W, tie)``."""
    n, m = W.shape
    ok = np.isfinite(W) & (C[None, :] > 0)
    eu, el = np.nonzero(ok)
    eu = eu.astype(np.int64)
    el = el.astype(np.int64)
    flow, unrouted = K.route_min_cost(eu, el, W[eu, el].astype(float), tie[eu, el].astype(float),
                                      np.asarray(totals, float), np.asarray(C, float), n, m)
    x = np.zeros((n, m))
    x[eu, el] = flow
    return x, unrouted


def allocate(mode, fam, pa, pb, W, C, tie, tol=IPM_TOL, max_iter=IPM_MAX_ITER, certify=True):
    """Globally solve the concave allocation problem (F concave).

    With ``certify=False`` only the traffic matrix is computed (the
    certificate fields are left empty); used by inner loops.
    """
    W = np.ascontiguousarray(W, dtype=float)
    C = np.ascontiguousarray(C, dtype=float)
    tie = np.ascontiguousarray(tie, dtype=float)
    x, it, status = K.solve_traffic(mode, fam, pa, pb, W, C, tie, tol, max_iter, True)
    if not certify:
        return Allocation(x, x.sum(axis=1), None, None, np.nan, int(it), "ipm")
    lam, mu, res = certificate(mode, fam, pa, pb, W, C, x)
    method = "ipm+polish"
    if res > 1e-9:
        x2, it, status = K.solve_traffic(mode, fam, pa, pb, W, C, tie, tol, max_iter, False)
        lam2, mu2, res2 = certificate(mode, fam, pa, pb, W, C, x2)
        if res2 < res:
            x, lam, mu, res, method = x2, lam2, mu2, res2, "ipm"
    if status in (1, 2) and res > 1e-6:
        raise SolverError(f"interior-point solver stopped with status {status}", residual=res)
    return Allocation(x, x.sum(axis=1), lam, mu, res, int(it), method)


def allocate_local(mode, fam, pa, pb, W, C, tie, x0=None, tol=1e-10, max_iter=200000):
    """Projected-gradient ascent; a local optimum when F is not concave."""
    W = np.asarray(W, float)
    C = np.asarray(C, float)
    n, m = W.shape
    ok = np.isfinite(W) & (C[None, :] > 0)
    eu, el = np.nonzero(ok)
    eu = eu.astype(np.int64)
    el = el.astype(np.int64)
    xs = np.zeros(len(eu)) if x0 is None else np.asarray(x0, float)[eu, el]
    if x0 is None and len(eu):
        deg = np.bincount(el, minlength=m).astype(float)
        xs = C[el] / (2.0 * np.maximum(deg[el], 1.0))
    xk, it, pg = K.allocate_pga(mode, fam, pa, pb, eu, el, W[eu, el], C, n, m, tol, max_iter, xs)
    xm = np.zeros((n, m))
    xm[eu, el] = xk
    y = xm.sum(axis=1)
    xr, unrouted = route(W, tie, y, C)
    if unrouted <= 1e-9 * (1.0 + y.sum()):
        xm = xr
    lam, mu, res = certificate(mode, fam, pa, pb, W, C, xm)
    return Allocation(xm, xm.sum(axis=1), lam, mu, res, int(it), "projected-gradient")
