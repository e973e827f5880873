"""Stage II: users' cooperative traffic choice under given hybrid prices.

Users jointly solve

    max_x  sum_i U_i(sum_j x[i, j]) - sum_{ij} (h[i, j] + c[i, j]) x[i, j]

subject to downlink capacities. Among optimal traffic matrices the one with
the smallest total delivered cost is returned (ties by gateway index).
"""

from dataclasses import dataclass

import numpy as np

from . import _alloc
from .errors import DomainError, InfeasibleError, RegimeError
from .scenario import require_solvable
from .utility import pack

#: sentinel for a blocked link
BLOCKED = np.inf


@dataclass(frozen=True, eq=False)
class HybridPriceMatrix:
    """Per-link hybrid prices ``h[i, j]`` (client i, gateway j).

    ``inf`` entries block a link. When built from an access/tethering split,
    ``h[i, j] = access[j] + tethering[i, j]`` with a zero tethering diagonal.
    """

    h: np.ndarray
    access: np.ndarray = None
    tethering: np.ndarray = None

    def __post_init__(self):
        h = np.array(self.h, dtype=float)
        if h.ndim != 2 or h.shape[0] != h.shape[1]:
            raise DomainError("hybrid price matrix must be square")
        if np.any(np.isnan(h)) or np.any(h < 0):
            raise DomainError("hybrid prices must be nonnegative")
        h.setflags(write=False)
        object.__setattr__(self, "h", h)

    @classmethod
    def from_decomposition(cls, access, tethering):
        a = np.asarray(access, float)
        t = np.asarray(tethering, float)
        if np.any(a < 0):
            raise DomainError("access prices must be nonnegative")
        if np.any(np.diag(t) != 0):
            raise DomainError("tethering price of a user's own downlink must be zero")
        return cls(a[None, :] + t, a, t)

    @classmethod
    def uniform_delivered(cls, s, p):
        """Gateway-independent prices ``h[i, j] = p_i - c[i, j]`` (clamped at 0)."""
        p = np.asarray(p, float)
        return cls(np.maximum(p[:, None] - s.link_energy, 0.0))


@dataclass
class TrafficSolution:
    """Stage-II traffic with its dual certificate.

    ``x[i, j]`` is the traffic to client i through gateway j, ``lam`` the
    capacity multipliers and ``mu`` the nonnegativity multipliers.
    """

    x: np.ndarray
    lam: np.ndarray
    mu: np.ndarray
    payoff: float
    kkt_residual: float
    iterations: int = 0

    @property
    def totals(self):
        return self.x.sum(axis=1)

    @property
    def link_load(self):
        return self.x.sum(axis=0)

    def to_dict(self):
        return {"x": self.x.tolist(), "lambda": self.lam.tolist(), "mu": self.mu.tolist(),
                "payoff": self.payoff, "kkt_residual": self.kkt_residual,
                "iterations": self.iterations}


def _prices(s, h):
    if isinstance(h, HybridPriceMatrix):
        h = h.h
    h = np.asarray(h, float)
    n = s.n_users
    if h.shape != (n, n):
        raise DomainError(f"price matrix must be {n}x{n}")
    if np.any(np.isnan(h)) or np.any(h < 0):
        raise DomainError("hybrid prices must be nonnegative")
    return h


def users_payoff(s, W, x):
    """``sum_i (U_i(y_i) - U_i(0)) - sum W x`` with blocked links carrying no traffic."""
    y = x.sum(axis=1)
    u = sum(u.value(max(y[i], 0.0)) - u.value(0.0) for i, u in enumerate(s.utilities))
    return float(u - np.sum(np.where(x > 0, W, 0.0) * x))


def solve_upm(s, h, tol=_alloc.IPM_TOL):
    """Globally optimal Stage-II traffic under hybrid prices ``h``."""
    require_solvable(s)
    h = _prices(s, h)
    W = h + s.link_energy
    fam, pa, pb = pack(s.utilities)
    a = _alloc.allocate(_alloc.UTILITY, fam, pa, pb, W, s.capacity, s.delivered_cost, tol=tol)
    return TrafficSolution(a.x, a.lam, a.mu, users_payoff(s, W, a.x), a.kkt_residual, a.iterations)


def min_cost_route(s, totals):
    """Route per-user totals at minimum delivered cost (ties to the lowest gateway)."""
    totals = np.asarray(totals, float)
    if totals.shape != (s.n_users,) or np.any(totals < 0):
        raise DomainError("totals must be a nonnegative vector with one entry per user")
    if totals.sum() > s.capacity.sum() * (1 + 1e-12) + 1e-12:
        raise InfeasibleError(f"total traffic {totals.sum()} exceeds capacity {s.capacity.sum()}")
    n = s.n_users
    idx = np.broadcast_to(np.arange(n, dtype=float)[None, :], (n, n))
    x, unrouted = _alloc.route(s.delivered_cost, idx, totals, s.capacity)
    if unrouted > 1e-9 * (1.0 + totals.sum()):
        raise InfeasibleError(f"{unrouted} units cannot be routed")
    return x


def demand_shortcut(s, p):
    """Stage-II traffic under gateway-independent delivered prices ``p``.

    Valid when aggregate demand fits in the total capacity, where the
    capacity multipliers are zero and each user simply buys ``d_i(p_i)``.
    """
    p = np.asarray(p, float)
    if p.shape != (s.n_users,) or np.any(~(p > 0)):
        raise DomainError("delivered prices must be positive, one per user")
    totals = np.array([0.0 if np.isinf(p[i]) else u.demand(p[i]) for i, u in enumerate(s.utilities)])
    cap = s.capacity.sum()
    if totals.sum() > cap * (1 + 1e-9) + 1e-12:
        raise RegimeError(f"demand {totals.sum()} exceeds capacity {cap}; use solve_upm")
    totals *= min(1.0, cap / totals.sum()) if totals.sum() > 0 else 1.0
    x = min_cost_route(s, totals)
    return traffic_at_delivered_prices(s, p, x)


def traffic_at_delivered_prices(s, p, x):
    """Wrap ``x`` with the Stage-II certificate for delivered prices ``p``."""
    n = s.n_users
    W = np.broadcast_to(np.asarray(p, float)[:, None], (n, n)).copy()
    fam, pa, pb = pack(s.utilities)
    lam, mu, res = _alloc.certificate(_alloc.UTILITY, fam, pa, pb, W, s.capacity, x)
    return TrafficSolution(x, lam, mu, users_payoff(s, W, x), res, 0)
