"""Cooperative pricing: revenue-based profit maximization, free tethering and
the social-welfare benchmark.

With delivered prices ``p_i = U'_i(y_i)`` the operators' joint profit becomes a
function of traffic alone,

    max_x  sum_i y_i U'_i(y_i) - sum_{ij} e~[i, j] x[i, j],

which is concave when every user's relative prudence is at most 2.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import _alloc
from . import _kernels as K
from .errors import ConvexityError, DomainError, RegimeError
from .outcome import mno_profits
from .scenario import require_solvable
from .upm import demand_shortcut, users_payoff
from .utility import Family, pack


@dataclass
class CoopResult:
    """Cooperative (or free-tethering) pricing outcome."""

    x: np.ndarray
    p_star: np.ndarray
    h_star: np.ndarray
    total_profit: float
    per_mno_profit: np.ndarray
    convex: bool = True
    iterations: int = 0
    kkt_residual: float = 0.0
    unconstrained: np.ndarray = None
    access: np.ndarray = None
    tethering: np.ndarray = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def totals(self):
        return self.x.sum(axis=1)


@dataclass
class WelfareResult:
    x: np.ndarray
    welfare: float
    lam: np.ndarray
    kkt_residual: float
    iterations: int = 0

    @property
    def totals(self):
        return self.x.sum(axis=1)


def revenue_concave(s):
    top = float(s.capacity.sum())
    if top <= 0:
        return True
    return all(u.check_assumption2(top) for u in s.utilities)


def recover_prices(s, x, tol=1e-9):
    """Delivered prices ``U'(y)`` and hybrid prices ``p_i - c[i, j]``.

    Negative hybrid prices are clamped to zero on idle links (marked
    unconstrained) and rejected on links that carry traffic.
    """
    y = x.sum(axis=1)
    p = np.array([u.marginal(min(y[i], u.peak)) for i, u in enumerate(s.utilities)])
    h = p[:, None] - s.link_energy
    neg = h < 0
    if np.any(neg & (x > tol)):
        raise DomainError("recovered hybrid price is negative on a link with traffic")
    unconstrained = x <= tol
    return p, np.where(neg, 0.0, h), unconstrained


def solve_ropm(s, allow_nonconvex=False, method="ipm"):
    """Optimal cooperative traffic and the prices that implement it.

    Parameters
    ----------
    allow_nonconvex : bool
        When some user violates the prudence bound, run projected gradient
        and flag the result as a local optimum instead of raising.
    method : {"ipm", "pga"}
    """
    require_solvable(s)
    convex = revenue_concave(s)
    if not convex and not allow_nonconvex:
        raise ConvexityError("revenue is not concave for some user (relative prudence > 2)")
    fam, pa, pb = pack(s.utilities)
    W = s.delivered_cost
    tie = np.broadcast_to(np.arange(s.n_users, dtype=float)[None, :], W.shape)
    if convex and method == "ipm":
        a = _alloc.allocate(_alloc.REVENUE, fam, pa, pb, W, s.capacity, tie)
    else:
        if not convex:
            warnings.warn("revenue not concave; returning a local optimum", RuntimeWarning, stacklevel=2)
        a = _alloc.allocate_local(_alloc.REVENUE, fam, pa, pb, W, s.capacity, tie)
    p, h, unc = recover_prices(s, a.x)
    V = mno_profits(s, p, a.x)
    return CoopResult(a.x, p, h, float(V.sum()), V, convex, a.iterations, a.kkt_residual, unc,
                      diagnostics={"method": a.method})


def solve_swm(s):
    """Maximize ``sum_i U_i(y_i) - sum e~ x`` under the capacities."""
    require_solvable(s)
    fam, pa, pb = pack(s.utilities)
    W = s.delivered_cost
    tie = np.broadcast_to(np.arange(s.n_users, dtype=float)[None, :], W.shape)
    a = _alloc.allocate(_alloc.UTILITY, fam, pa, pb, W, s.capacity, tie)
    return WelfareResult(a.x, users_payoff(s, W, a.x), a.lam, a.kkt_residual, a.iterations)


def check_corollary2(s):
    """Zero Wi-Fi energy, equal cellular energy and a common alpha-fair exponent."""
    if s.n_users == 0:
        return True
    if not s.zero_wifi or np.ptp(s.energy_down) != 0:
        return False
    fams = {u.family for u in s.utilities}
    return fams == {Family.ALPHA_FAIR} and len({u.p2 for u in s.utilities}) == 1


# ---------------------------------------------------------------------------
# free tethering: one uniform delivered price for everybody
# ---------------------------------------------------------------------------

def _greedy_segments(costs, caps):
    order = np.argsort(costs, kind="stable")
    c = costs[order]
    k = caps[order]
    keep = k > 0
    return c[keep], k[keep]


def uniform_price_revenue(s):
    """Pieces of the uniform-price problem ``max_Q G(Q) = Q pi(Q) - E(Q)``.

    Returns ``(G, marginal_revenue, price, seg_costs, seg_caps, Qmax)`` where
    ``E`` is the greedy cost of filling all downlinks cheapest first.
    """
    fam, pa, pb = pack(s.utilities)
    seg_c, seg_k = _greedy_segments(s.downlink_cost, s.capacity)
    dmax = K.agg_demand(fam, pa, pb, 1e-300) if s.n_users else 0.0
    qmax = min(float(seg_k.sum()), dmax)

    def price(q):
        if q <= 0:
            return K.max_marginal_zero(fam, pa, pb)
        p = K.inverse_demand(fam, pa, pb, q)
        return max(p, 0.0)

    def G(q):
        if q <= 0:
            return 0.0
        return q * price(q) - K.seg_cost(seg_c, seg_k, q)

    def mr(q):
        p, dp = K.price_and_slope(fam, pa, pb, q)
        return p + q * dp

    return G, mr, price, seg_c, seg_k, qmax


def _ft_quantity(s):
    G, mr, price, seg_c, seg_k, qmax = uniform_price_revenue(s)
    if qmax <= 0 or len(seg_c) == 0:
        return 0.0, True
    cands = [0.0, qmax]
    bounds = np.concatenate([[0.0], np.cumsum(seg_k)])
    for k in range(len(seg_c)):
        lo, hi = bounds[k], min(bounds[k + 1], qmax)
        if hi <= lo:
            continue
        cands.append(hi)
        f = lambda q: mr(q) - seg_c[k]
        flo = f(lo) if lo > 0 else np.inf
        fhi = f(hi)
        if flo > 0 > fhi:
            a, b = lo, hi
            for _ in range(200):
                m = 0.5 * (a + b)
                if f(m) > 0:
                    a = m
                else:
                    b = m
                if b - a <= 1e-15 * max(hi, 1.0):
                    break
            cands.append(0.5 * (a + b))
    best = max(cands, key=G)
    # quasi-concavity check on a grid; fall back to golden refinement
    grid = np.linspace(0.0, qmax, 2001)[1:]
    gv = np.array([G(q) for q in grid])
    quasi = True
    if gv.max() > G(best) + 1e-9 * max(1.0, abs(G(best))):
        quasi = False
        warnings.warn("uniform-price revenue is not quasi-concave; using grid search", RuntimeWarning,
                      stacklevel=3)
        k = int(np.argmax(gv))
        a, b = grid[max(k - 1, 0)], grid[min(k + 1, len(grid) - 1)]
        gr = (np.sqrt(5) - 1) / 2
        for _ in range(200):
            c1, c2 = b - gr * (b - a), a + gr * (b - a)
            if G(c1) >= G(c2):
                b = c2
            else:
                a = c1
        best = max([best, 0.5 * (a + b)], key=G)
    return best, quasi


def solve_ft(s):
    """Free tethering: tethering prices are zero and a uniform delivered price is set."""
    require_solvable(s)
    if not s.zero_wifi:
        raise RegimeError("free tethering requires zero Wi-Fi energy costs")
    G, mr, price, *_ = uniform_price_revenue(s)
    q, quasi = _ft_quantity(s)
    n = s.n_users
    pi = price(q)
    p = np.full(n, pi)
    if q > 0:
        x = demand_shortcut(s, p).x
    else:
        x = np.zeros((n, n))
    access = np.maximum(pi - s.energy_down, 0.0)
    tether = np.zeros((n, n))
    h = np.broadcast_to(access[None, :], (n, n)).copy()
    V = mno_profits(s, p, x)
    return CoopResult(x, p, h, float(V.sum()), V, True, 0, 0.0, x <= 1e-9, access, tether,
                      diagnostics={"quantity": q, "quasi_concave": quasi})
