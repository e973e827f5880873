"""Quantity competition among MNOs.

MNO ``n`` chooses an output ``q_n`` in ``[0, sum of its capacities]`` and sells
at the uniform price ``pi(sum_m q_m)`` that clears aggregate demand; its cost
``E_n(q_n)`` is the greedy fill of its own downlinks cheapest first. Given a
total ``b``, each MNO's best output is

    phi_n(b) = argmax_q  q pi(b) + q^2 pi'(b) / 2 - E~_n(q)

with ``E~_n`` the C1 smoothing of ``E_n``, and an equilibrium is a fixed
point ``b = Phi(b) = sum_n phi_n(b)``.
"""

from dataclasses import dataclass, field

import numpy as np

from . import _alloc
from . import _kernels as K
from .errors import DomainError, RegimeError, SolverError
from .outcome import Scheme, priced_outcome
from .price_competition import Path, classify_regime, single_operator_pce
from .scenario import require_solvable
from .utility import pack

DEFAULT_TOL = 1e-9
DEFAULT_MAX_ITER = 10 ** 6
#: mean-value iterations tried by ``method="auto"`` before switching to bisection
AUTO_BUDGET = 2000


def _check(s):
    require_solvable(s)
    if not s.zero_wifi:
        raise RegimeError("quantity competition requires zero Wi-Fi energy costs")


def mno_segments(s, mno):
    """Delivered costs and capacities of an MNO's downlinks, cheapest first."""
    if not 0 <= mno < s.n_mnos:
        raise DomainError(f"no MNO {mno}")
    links = s.mno_links(mno)
    links = links[s.capacity[links] > 0]
    cost = s.downlink_cost[links]
    order = np.lexsort((links, cost))
    return cost[order], s.capacity[links][order]


def _min_cap(s):
    c = s.capacity[s.capacity > 0]
    return float(c.min()) if len(c) else 1.0


def default_eps(s):
    return 1e-6 * _min_cap(s)


def _check_eps(s, eps):
    eps = float(eps)
    if not eps > 0:
        raise DomainError("eps must be positive")
    if eps >= 0.5 * _min_cap(s):
        raise DomainError(f"eps {eps} must be below half the smallest capacity")
    return eps


def aggregate_cost(s, mno, q):
    """Cheapest cost of producing ``q`` on the MNO's downlinks."""
    c, k = mno_segments(s, mno)
    q = float(q)
    if q < 0 or q > k.sum() * (1 + 1e-12):
        raise DomainError(f"output {q} outside [0, {k.sum()}]")
    return K.seg_cost(c, k, q)


def smoothed_cost(s, mno, q, eps=None):
    """Smoothed cost and its derivative at ``q``.

    Inside ``(q_bar - eps, q_bar + eps)`` around each kink with slopes
    ``s1 < s2`` the cost is the quadratic blend
    ``E(q_bar - eps) + s1 z + (s2 - s1) z^2 / (4 eps)`` with ``z = q - q_bar + eps``.
    """
    eps = _check_eps(s, default_eps(s) if eps is None else eps)
    c, k = mno_segments(s, mno)
    q = float(q)
    if q < 0 or q > k.sum() * (1 + 1e-12):
        raise DomainError(f"output {q} outside [0, {k.sum()}]")
    return K.smooth_cost(c, k, q, eps), K.smooth_cost_d1(c, k, q, eps)


class _Packed:
    def __init__(self, s, eps):
        self.fam, self.pa, self.pb = pack(s.utilities)
        segs = [mno_segments(s, n) for n in range(s.n_mnos)]
        self.starts = np.concatenate([[0], np.cumsum([len(c) for c, _ in segs])]).astype(np.int64)
        self.costs = np.concatenate([c for c, _ in segs] + [np.zeros(0)])
        self.caps = np.concatenate([k for _, k in segs] + [np.zeros(0)])
        self.eps = np.full(s.n_mnos, eps)
        self.top = float(self.caps.sum())
        self.dmax = K.agg_demand(self.fam, self.pa, self.pb, 1e-300) if s.n_users else 0.0

    def phi(self, b):
        out = np.empty(len(self.eps))
        tot = K.phi_all(self.fam, self.pa, self.pb, self.starts, self.costs, self.caps, self.eps, b, out)
        return tot, out


def phi_n(s, mno, b, eps=None):
    """Best output of ``mno`` when the market total is ``b``."""
    _check(s)
    eps = _check_eps(s, default_eps(s) if eps is None else eps)
    pk = _Packed(s, eps)
    b = float(b)
    if b < 0 or b > pk.top * (1 + 1e-12):
        raise DomainError(f"total output {b} outside [0, {pk.top}]")
    if b > pk.dmax:
        raise DomainError(f"no positive price sells {b}")
    if not 0 <= mno < s.n_mnos:
        raise DomainError(f"no MNO {mno}")
    return float(pk.phi(b)[1][mno])


def phi(s, b, eps=None):
    """``Phi(b)`` and the per-MNO best outputs."""
    _check(s)
    eps = _check_eps(s, default_eps(s) if eps is None else eps)
    tot, out = _Packed(s, eps).phi(float(b))
    return tot, out


@dataclass
class QuantityProfile:
    q: np.ndarray
    b_star: float
    uniform_price: float
    per_mno_profit: np.ndarray
    iterations: int
    converged: bool
    method: str
    residual: float
    trace: np.ndarray = None
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self):
        return {"q": self.q.tolist(), "b_star": self.b_star, "uniform_price": self.uniform_price,
                "per_mno_profit": self.per_mno_profit.tolist(), "iterations": self.iterations,
                "converged": self.converged, "method": self.method, "residual": self.residual,
                "trace": None if self.trace is None else self.trace.tolist()}


def find_qce(s, eps=None, tol=DEFAULT_TOL, method="auto", b0=None, max_iter=DEFAULT_MAX_ITER,
             trace=False, budget=AUTO_BUDGET):
    """Quantity competition equilibrium.

    Parameters
    ----------
    method : {"auto", "mean_value", "bisection"}
        ``mean_value`` runs ``b <- Phi(b)/t + (1 - 1/t) b`` until
        ``|b - Phi(b)| <= tol * b``. ``bisection`` brackets the root of
        ``Phi(b) - b`` on ``[0, total capacity]``. ``auto`` tries the
        mean-value dynamics for ``budget`` steps, then bisects.
    b0 : float, optional
        Starting total for the mean-value dynamics (default: half the capacity).
    trace : bool
        Keep the mean-value iterates.
    """
    _check(s)
    eps = _check_eps(s, default_eps(s) if eps is None else eps)
    pk = _Packed(s, eps)
    if method not in ("auto", "mean_value", "bisection"):
        raise DomainError(f"unknown method {method!r}")
    b0 = 0.5 * pk.top if b0 is None else float(b0)
    if b0 < 0 or b0 > pk.top:
        raise DomainError(f"b0 must lie in [0, {pk.top}]")
    tr = None
    its = 0
    used = method
    b = None
    conv = False
    if pk.top <= 0 or s.n_users == 0:
        b, conv, used = 0.0, True, "trivial"
    elif method in ("mean_value", "auto"):
        cap = max_iter if method == "mean_value" else min(budget, max_iter)
        b, _p, its, conv, tr = K.mean_value_iteration(pk.fam, pk.pa, pk.pb, pk.starts, pk.costs, pk.caps,
                                                      pk.eps, b0, tol, cap, trace)
        if not conv and method == "mean_value":
            raise SolverError(f"mean-value iteration did not converge in {its} steps",
                              residual=abs(b - _p), trace=tr if trace else None)
        used = "mean_value"
    if not conv:
        b, _p, it2, conv = K.fixed_point_bisection(pk.fam, pk.pa, pk.pb, pk.starts, pk.costs, pk.caps,
                                                   pk.eps, pk.top, tol, 400)
        its += it2
        used = "mean_value+bisection" if method == "auto" else "bisection"
        if not conv:
            raise SolverError("bisection on Phi(b) - b failed", residual=abs(b - _p))
    tot, q = pk.phi(b) if b > 0 or pk.top > 0 else (0.0, np.zeros(s.n_mnos))
    if b == 0.0:
        tot, q = 0.0, np.zeros(s.n_mnos) if tot == 0 else q
    price = K.inverse_demand(pk.fam, pk.pa, pk.pb, b) if s.n_users else np.inf
    price = max(price, 0.0)
    V = np.zeros(s.n_mnos)
    for n in range(s.n_mnos):
        lo, hi = pk.starts[n], pk.starts[n + 1]
        cost = K.seg_cost(pk.costs[lo:hi], pk.caps[lo:hi], q[n]) if q[n] > 0 else 0.0
        V[n] = q[n] * price - cost if q[n] > 0 else 0.0
    return QuantityProfile(q, float(b), float(price), V, int(its), bool(conv), used, abs(b - tot),
                           tr if trace else None)


def capped_capacity(s, q):
    """Capacities that let each MNO sell exactly ``q_n`` on its cheapest downlinks."""
    cap = np.zeros(s.n_users)
    for n in range(s.n_mnos):
        links = s.mno_links(n)
        order = links[np.lexsort((links, s.downlink_cost[links]))]
        rem = float(q[n])
        for j in order:
            take = min(s.capacity[j], rem)
            cap[j] = take
            rem -= take
            if rem <= 0:
                break
    return cap


def qce_outcome(s, profile, scheme=Scheme.QCG, regime="quantity"):
    """Prices and traffic implied by a quantity profile.

    Every user pays ``pi(sum q)`` and the traffic fills each MNO's cheapest
    downlinks up to its output, so ``V_n = q_n pi - E_n(q_n)``.
    """
    n = s.n_users
    b = float(np.sum(profile.q))
    fam, pa, pb = pack(s.utilities)
    if b > 0:
        price = max(K.inverse_demand(fam, pa, pb, b), 0.0)
    else:
        price = K.max_marginal_zero(fam, pa, pb) if n else np.inf
    p = np.full(n, price)
    x = np.zeros((n, n))
    if b > 0 and np.isfinite(price) and price > 0:
        totals = np.array([u.demand(price) for u in s.utilities])
        cap = capped_capacity(s, profile.q)
        if totals.sum() > 0:
            totals *= min(1.0, cap.sum() / totals.sum())
        idx = np.broadcast_to(np.arange(n, dtype=float)[None, :], (n, n))
        x, unrouted = _alloc.route(s.delivered_cost, idx, totals, cap * (1 + 1e-12))
    diag = {"q": profile.q, "b_star": profile.b_star, "iterations": profile.iterations,
            "method": profile.method, "converged": profile.converged}
    return priced_outcome(s, scheme, p, x, regime=regime, diagnostics=diag)


def competitive_scheme(s, **qce_kw):
    """Price equilibrium when one operator dominates, otherwise the quantity equilibrium.

    When the single-operator prices would overload the capacity the quantity
    equilibrium is used instead and ``diagnostics["fallback"]`` says why.
    """
    _check(s)
    note = None
    if classify_regime(s) is Path.SINGLE_OPERATOR:
        try:
            pce = single_operator_pce(s)
        except RegimeError as exc:
            note = str(exc)
        else:
            return priced_outcome(s, Scheme.COMP, pce.p_star, pce.x, regime=pce.regime.value,
                                  diagnostics={"tags": pce.tags, "g_thr": pce.g_thr})
    prof = find_qce(s, **qce_kw)
    out = qce_outcome(s, prof, Scheme.COMP, regime="quantity")
    if note:
        out.diagnostics["fallback"] = note
    return out
