"""Price competition among MNOs.

Downlinks are sorted by delivered cost ``e~_1 <= e~_2 <= ...`` (zero Wi-Fi
energy is required, so a downlink's delivered cost is the same for every
client). ``zeta_k`` is the uniform delivered price at which aggregate demand
equals the capacity of the ``k`` cheapest downlinks, and the threshold
downlink is the cheapest one not owned by the owner of the cheapest downlink.
"""

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.optimize import minimize

from . import _alloc
from . import _kernels as K
from .cooperative import revenue_concave
from .errors import ConvexityError, DomainError, RegimeError
from .outcome import mno_profits
from .scenario import require_solvable
from .upm import demand_shortcut
from .utility import pack

#: returned by :func:`threshold_downlink` when one MNO owns every downlink
MONOPOLY = None


class Regime(str, Enum):
    SINGLE_OPERATOR_PERFECT = "SingleOperatorPerfect"
    SINGLE_OPERATOR_DEPRESSED = "SingleOperatorDepressed"
    MULTI_OPERATOR_CANDIDATE = "MultiOperatorCandidate"
    NO_EQUILIBRIUM = "NoEquilibrium"


class Path(str, Enum):
    SINGLE_OPERATOR = "single-operator"
    MULTI_OPERATOR = "multi-operator"


class Region(str, Enum):
    SINGLE_OPERATOR_PCE = "SingleOperatorPCE"
    MULTI_OPERATOR_PCE = "MultiOperatorPCE"
    NO_PCE = "NoPCE"


@dataclass
class DownlinkOrder:
    """Downlinks sorted by delivered cost (ties by index)."""

    order: np.ndarray
    cost: np.ndarray
    cap: np.ndarray
    owner: np.ndarray
    g_pos: int = None

    @property
    def g_thr(self):
        return None if self.g_pos is None else int(self.order[self.g_pos])


def downlink_order(s):
    if not s.zero_wifi:
        raise RegimeError("price competition requires zero Wi-Fi energy costs")
    cost = s.downlink_cost
    n = s.n_users
    # equal costs are separated by a 1e-12 * index perturbation
    order = np.lexsort((np.arange(n), cost))
    owner = s.subscription[order]
    g = None
    if n:
        others = np.flatnonzero(owner != owner[0])
        g = int(others[0]) if len(others) else None
    return DownlinkOrder(order, cost[order], s.capacity[order], owner, g)


def market_clearing_price(s, k):
    """Uniform delivered price clearing the ``k`` cheapest downlinks (1 <= k <= n)."""
    if not 1 <= k <= s.n_users:
        raise DomainError(f"k must be in [1, {s.n_users}], got {k}")
    o = downlink_order(s)
    q = float(o.cap[:k].sum())
    fam, pa, pb = pack(s.utilities)
    z = K.inverse_demand(fam, pa, pb, q)
    if z < 0:
        raise DomainError(f"aggregate demand never reaches {q}")
    return z


def zeta_table(s):
    """``zeta[k - 1]`` for ``k = 1 .. n``."""
    o = downlink_order(s)
    fam, pa, pb = pack(s.utilities)
    z = K.market_clearing_scan(fam, pa, pb, np.cumsum(o.cap))
    if np.any(z < 0):
        raise DomainError("aggregate demand cannot clear the available capacity")
    return z


def threshold_downlink(s):
    """Index of the threshold downlink, or :data:`MONOPOLY`."""
    return downlink_order(s).g_thr


def classify_regime(s):
    o = downlink_order(s)
    if o.g_pos is None:
        return Path.SINGLE_OPERATOR
    z = zeta_table(s)
    return Path.SINGLE_OPERATOR if z[o.g_pos - 1] <= o.cost[o.g_pos] else Path.MULTI_OPERATOR


@dataclass
class ProbeReport:
    """Best unilateral deviation found for each MNO."""

    base_profit: np.ndarray
    gain: np.ndarray
    best_delta: list
    evaluations: int
    confirmed: bool

    def to_dict(self):
        return {"base_profit": self.base_profit.tolist(), "gain": self.gain.tolist(),
                "best_delta": [np.asarray(d).tolist() for d in self.best_delta],
                "evaluations": self.evaluations, "confirmed": self.confirmed}


@dataclass
class PceOutcome:
    regime: Regime
    p_star: np.ndarray
    g_thr: int
    zeta: np.ndarray
    s_hat: int = None
    candidate: np.ndarray = None
    verification: ProbeReport = None
    tags: list = None
    x: np.ndarray = None
    V: np.ndarray = None
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self):
        arr = lambda a: None if a is None else np.asarray(a).tolist()
        return {"regime": self.regime.value, "p_star": arr(self.p_star), "g_thr": self.g_thr,
                "zeta": arr(self.zeta), "s_hat": self.s_hat, "candidate": arr(self.candidate),
                "verification": None if self.verification is None else self.verification.to_dict(),
                "tags": self.tags, "x": arr(self.x), "V": arr(self.V)}


def single_operator_pce(s, allow_nonconvex=False):
    """Monopoly prices of the cheapest MNO, capped at the threshold cost."""
    require_solvable(s)
    o = downlink_order(s)
    z = zeta_table(s)
    n = s.n_users
    if n == 0:
        return PceOutcome(Regime.SINGLE_OPERATOR_PERFECT, np.zeros(0), None, z, tags=[])
    top = o.owner[0]
    W = np.where((s.subscription == top)[None, :], s.delivered_cost, np.inf)
    fam, pa, pb = pack(s.utilities)
    tie = np.broadcast_to(np.arange(n, dtype=float)[None, :], W.shape)
    if revenue_concave(s):
        a = _alloc.allocate(_alloc.REVENUE, fam, pa, pb, W, s.capacity, tie)
    elif allow_nonconvex:
        a = _alloc.allocate_local(_alloc.REVENUE, fam, pa, pb, W, s.capacity, tie)
    else:
        raise ConvexityError("revenue is not concave for some user (relative prudence > 2)")
    p_tilde = np.array([u.marginal(min(a.y[i], u.peak)) for i, u in enumerate(s.utilities)])
    cap = np.inf if o.g_pos is None else o.cost[o.g_pos]
    p = np.minimum(p_tilde, cap)
    tags = ["depressed" if pt >= cap else "perfect" for pt in p_tilde]
    regime = Regime.SINGLE_OPERATOR_DEPRESSED if "depressed" in tags else Regime.SINGLE_OPERATOR_PERFECT
    try:
        x = demand_shortcut(s, p).x
    except RegimeError as exc:
        # lowering depressed prices to e~_gthr can push demand past capacity
        raise RegimeError(f"single-operator prices are not market-feasible: {exc}") from None
    return PceOutcome(regime, p, o.g_thr, z, tags=tags, x=x, V=mno_profits(s, p, x),
                      diagnostics={"p_tilde": p_tilde})


def critical_downlink(s, zeta=None, order=None):
    """Count ``s_hat`` with ``e~_s <= zeta_s <= e~_{s+1}`` (None if no such count)."""
    o = order if order is not None else downlink_order(s)
    z = zeta if zeta is not None else zeta_table(s)
    n = len(z)
    for k in range(1, n + 1):
        if o.cost[k - 1] <= z[k - 1] and (k == n or z[k - 1] <= o.cost[k]):
            return k
    return None


def multi_operator_pce(s, verify=True, **probe_kw):
    """Candidate ``p_i = zeta_{s_hat}`` for all users, then a deviation check."""
    require_solvable(s)
    o = downlink_order(s)
    z = zeta_table(s)
    k = critical_downlink(s, z, o)
    if k is None:
        return PceOutcome(Regime.NO_EQUILIBRIUM, None, o.g_thr, z,
                          diagnostics={"reason": "no critical downlink"})
    cand = np.full(s.n_users, z[k - 1])
    x = demand_shortcut(s, cand).x
    rep = verify_pce(s, cand, **probe_kw) if verify else None
    ok = rep is None or rep.confirmed
    return PceOutcome(Regime.MULTI_OPERATOR_CANDIDATE if ok else Regime.NO_EQUILIBRIUM,
                      cand if ok else None, o.g_thr, z, s_hat=k, candidate=cand, verification=rep,
                      x=x, V=mno_profits(s, cand, x))


def solve_pce(s, verify=True, **probe_kw):
    if classify_regime(s) is Path.SINGLE_OPERATOR:
        return single_operator_pce(s)
    return multi_operator_pce(s, verify=verify, **probe_kw)


# ---------------------------------------------------------------------------
# deviation probes
# ---------------------------------------------------------------------------

class _DeviationModel:
    """Stage-II profit of MNO ``n`` when it offers ``p_i + delta_i`` on its downlinks."""

    def __init__(self, s, p):
        self.s = s
        self.p = np.asarray(p, float)
        self.fam, self.pa, self.pb = pack(s.utilities)
        self.base_W = np.broadcast_to(self.p[:, None], (s.n_users, s.n_users)).copy()
        self.tie = np.ascontiguousarray(s.delivered_cost)
        self.count = 0

    def profit(self, n, delta):
        s = self.s
        own = s.subscription == n
        W = self.base_W.copy()
        new = self.p + np.asarray(delta, float)
        # hybrid prices stay nonnegative
        W[:, own] = np.maximum(new[:, None], s.link_energy[:, own])
        self.count += 1
        a = _alloc.allocate(_alloc.UTILITY, self.fam, self.pa, self.pb, W, s.capacity, self.tie,
                            certify=False)
        margin = np.where(np.isfinite(W), W - s.delivered_cost, 0.0)
        return float(np.sum((margin * a.x)[:, own]))


def _signed_grid(base, rel):
    r = np.asarray(rel, float) * base
    return np.concatenate([-r[::-1], r])


def _golden_max(f, a, b, iters=60):
    gr = (np.sqrt(5) - 1) / 2
    c, d = b - gr * (b - a), a + gr * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - gr * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + gr * (b - a)
            fd = f(d)
    return (c, fc) if fc >= fd else (d, fd)


REL_GRID = (1e-4, 3e-4, 1e-3, 3e-3, 1e-2, 3e-2, 0.06, 0.1, 0.15, 0.2, 0.3, 0.45, 0.6, 0.8, 1.0, 1.5, 2.5, 5.0)
FULL_GRID = (0.0, 0.01, -0.01, 0.05, -0.05, 0.1, -0.1, 0.2, -0.2, 0.4, -0.4, 0.7, -0.7)


def verify_pce(s, p, rel_tol=1e-6, abs_tol=1e-9, nelder_mead=True, full_grid_users=3):
    """Search unilateral gateway-independent deviations of every MNO.

    For each MNO the deviation is a per-user price shift ``delta`` applied to
    all of its downlinks. Probes: uniform shifts on a signed log grid with
    golden refinement, single-user shifts, shifts offered to one user while
    blocking the others, a coarse full grid for few users and a final
    Nelder-Mead polish. The profile is confirmed when no MNO gains more than
    ``rel_tol * |V_n| + abs_tol``.
    """
    p = np.asarray(p, float)
    n_users = s.n_users
    model = _DeviationModel(s, p)
    finite = p[np.isfinite(p)]
    base = float(np.mean(finite)) if len(finite) else 1.0
    base = base if base > 0 else 1.0
    grid = _signed_grid(base, REL_GRID)
    lo_shift = s.link_energy.max(axis=1) - p  # delta below this makes h negative everywhere
    base_profit = np.zeros(s.n_mnos)
    gains = np.zeros(s.n_mnos)
    best_deltas = []
    for n in range(s.n_mnos):
        if not np.any(s.subscription == n) or n_users == 0:
            best_deltas.append(np.zeros(n_users))
            continue
        V0 = model.profit(n, np.zeros(n_users))
        base_profit[n] = V0
        best = [V0, np.zeros(n_users)]

        def consider(delta):
            delta = np.maximum(np.asarray(delta, float), np.minimum(lo_shift, 0.0))
            v = model.profit(n, delta)
            if v > best[0]:
                best[0], best[1] = v, delta.copy()
            return v

        # uniform shifts plus golden refinement around the best grid point
        vals = [consider(np.full(n_users, d)) for d in grid]
        k = int(np.argmax(vals))
        a = grid[k - 1] if k > 0 else grid[0] * 1.5
        b = grid[k + 1] if k + 1 < len(grid) else grid[-1] * 1.5
        _golden_max(lambda d: consider(np.full(n_users, d)), a, b)
        # single-user shifts, with and without excluding everybody else
        for i in range(n_users):
            for blocked in (False, True):
                delta = np.full(n_users, np.inf) if blocked else np.zeros(n_users)
                vals = []
                for d in grid:
                    delta[i] = d
                    vals.append(consider(delta))
                k = int(np.argmax(vals))
                a = grid[k - 1] if k > 0 else grid[0] * 1.5
                b = grid[k + 1] if k + 1 < len(grid) else grid[-1] * 1.5

                def f1(d, delta=delta.copy(), i=i):
                    delta[i] = d
                    return consider(delta)

                _golden_max(f1, a, b, iters=40)
        if n_users <= full_grid_users:
            pts = np.array(FULL_GRID) * base
            for combo in np.array(np.meshgrid(*([pts] * n_users))).reshape(n_users, -1).T:
                consider(combo)
        if nelder_mead and np.all(np.isfinite(best[1])):
            x0 = best[1].copy()
            simplex = [x0] + [x0 + np.eye(n_users)[i] * 0.05 * base for i in range(n_users)]
            minimize(lambda d: -consider(d), x0, method="Nelder-Mead",
                     options={"initial_simplex": np.array(simplex), "maxfev": 150 * n_users,
                              "xatol": 1e-10 * base, "fatol": 1e-13 * max(1.0, abs(V0))})
        gains[n] = best[0] - V0
        best_deltas.append(best[1])
    thresh = rel_tol * np.abs(base_profit) + abs_tol
    return ProbeReport(base_profit, gains, best_deltas, model.count, bool(np.all(gains <= thresh)))


# ---------------------------------------------------------------------------
# closed-form 2x2 classifier
# ---------------------------------------------------------------------------

def classify_2x2_region(theta, e, c, C):
    """Existence region for two MNOs with one logarithmic (a = 1) user each.

    ``e`` are operator costs, ``c`` the common cellular energy cost, so the
    delivered costs are ``e_i + c`` and must satisfy ``e~_1 < e~_2``. The
    closed form uses ``d_i(p) = theta_i / p - 1`` for both users, so both
    must still buy at ``zeta_1``: ``min(theta) > zeta_1``.
    """
    t1, t2 = map(float, theta)
    e1, e2 = (float(v) + float(c) for v in e)
    C1, C2 = map(float, C)
    if not (t1 > 0 and t2 > 0 and C1 > 0 and C2 > 0 and 0 <= e1 < e2):
        raise DomainError("need positive theta and C and delivered costs e~_1 < e~_2")
    T = t1 + t2
    z1 = T / (C1 + 2.0)
    if min(t1, t2) <= z1:
        raise DomainError(f"closed form needs both users to buy at zeta_1 = {z1}: min(theta) > zeta_1")
    if z1 <= e2:
        return Region.SINGLE_OPERATOR_PCE
    z2 = T / (C1 + C2 + 2.0)
    if z2 < e2:
        return Region.NO_PCE
    cbar = (C2, C1)
    for i, ei in enumerate((e1, e2)):
        for tj in (t1, t2):
            if ei * tj / z2 ** 2 > cbar[i] + 1.0:
                return Region.NO_PCE
        if ei * T / z2 ** 2 > cbar[i] + 2.0:
            return Region.NO_PCE
    return Region.MULTI_OPERATOR_PCE


def region_margin(theta, e, c, C):
    """Smallest relative slack of the inequalities defining the 2x2 regions."""
    t1, t2 = map(float, theta)
    e1, e2 = (float(v) + float(c) for v in e)
    C1, C2 = map(float, C)
    T = t1 + t2
    z1 = T / (C1 + 2.0)
    z2 = T / (C1 + C2 + 2.0)
    m = [abs(z1 - e2) / e2, abs(z2 - e2) / e2]
    cbar = (C2, C1)
    for i, ei in enumerate((e1, e2)):
        for tj in (t1, t2):
            m.append(abs(ei * tj / z2 ** 2 - (cbar[i] + 1.0)) / (cbar[i] + 1.0))
        m.append(abs(ei * T / z2 ** 2 - (cbar[i] + 2.0)) / (cbar[i] + 2.0))
    return min(m)
