"""No-tethering benchmark and side-by-side comparison of pricing schemes.

Without tethering every user can only be served by its own downlink, so the
operators face independent single-user monopolies: user ``i`` is sold

    y_i = argmax_{0 <= y <= C_i}  y U'_i(y) - e~[i, i] y

at the delivered price ``p_i = U'_i(y_i)``.
"""

import csv
import io
import json
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from . import _alloc
from . import _kernels as K
from .cooperative import solve_ft, solve_ropm, solve_swm
from .errors import MCAError
from .outcome import EquilibriumOutcome, Scheme, mno_profits, priced_outcome, social_welfare
from .quantity_competition import competitive_scheme, find_qce, qce_outcome
from .scenario import require_solvable
from .upm import BLOCKED, users_payoff
from .utility import pack

__all__ = ["EquilibriumOutcome", "Scheme", "solve_ntp", "coop_outcome", "ft_outcome", "qcg_outcome",
           "swm_outcome", "comp_outcome", "SCHEMES", "ComparisonRow", "Comparison", "compare_schemes",
           "CSV_COLUMNS"]

SCHEMES = (Scheme.COOP, Scheme.COMP, Scheme.QCG, Scheme.FT, Scheme.NTP, Scheme.SWM)


def _monopoly_quantity(u, cost, cap):
    """Best single-user sale ``argmax_{0<=y<=cap} y U'(y) - cost y``."""
    if cap <= 0 or u.marginal_at_zero() <= cost:
        return 0.0
    fam, pa, pb = pack([u])
    obj = lambda y: K.f_value(1, fam[0], pa[0], pb[0], y) - cost * y
    slope = lambda y: K.f_d1(1, fam[0], pa[0], pb[0], y) - cost
    top = min(cap, u.peak)
    cands = [0.0, top]
    lo = 1e-300 if np.isinf(slope(0.0)) else 0.0
    if slope(lo) > 0 > slope(top):
        cands.append(brentq(slope, lo, top, xtol=1e-15 * max(top, 1.0), rtol=1e-15, maxiter=500))
    if not u.check_assumption2(top):
        # revenue may be nonconcave: scan and refine around the best grid point
        g = np.linspace(0.0, top, 2001)
        k = int(np.argmax([obj(y) for y in g]))
        a, b = g[max(k - 1, 0)], g[min(k + 1, len(g) - 1)]
        for _ in range(100):
            if b - a <= 1e-15 * top:
                break
            m1, m2 = a + (b - a) / 3, b - (b - a) / 3
            if obj(m1) >= obj(m2):
                b = m2
            else:
                a = m1
        cands.append(0.5 * (a + b))
    return max(cands, key=obj)


def solve_ntp(s):
    """No-tethering pricing: blocked tethering links, per-user monopoly prices."""
    require_solvable(s)
    n = s.n_users
    cost = np.diag(s.delivered_cost)
    y = np.array([_monopoly_quantity(u, cost[i], s.capacity[i]) for i, u in enumerate(s.utilities)])
    p = np.array([u.marginal(y[i]) if y[i] > 0 else u.marginal_at_zero() for i, u in enumerate(s.utilities)])
    x = np.diag(y)
    h = np.full((n, n), BLOCKED)
    np.fill_diagonal(h, np.maximum(p - np.diag(s.link_energy), 0.0))
    W = np.full((n, n), BLOCKED)
    np.fill_diagonal(W, p)
    fam, pa, pb = pack(s.utilities)
    lam, _mu, res = _alloc.certificate(_alloc.UTILITY, fam, pa, pb, W, s.capacity, x)
    V = mno_profits(s, p, x)
    return EquilibriumOutcome(Scheme.NTP, p, x, V, users_payoff(s, W, x), social_welfare(s, x),
                              "no-tethering", res, lam, h, {"y": y})


def _priced(s, scheme, p, x, h, regime=None, diagnostics=None):
    return priced_outcome(s, scheme, p, x, regime=regime, h=h, diagnostics=diagnostics)


def coop_outcome(s, **kw):
    r = solve_ropm(s, **kw)
    return _priced(s, Scheme.COOP, r.p_star, r.x, r.h_star, "cooperative",
                   {"convex": r.convex, "iterations": r.iterations, "method": r.diagnostics.get("method")})


def ft_outcome(s):
    r = solve_ft(s)
    return _priced(s, Scheme.FT, r.p_star, r.x, r.h_star, "free-tethering", r.diagnostics)


def qcg_outcome(s, **kw):
    return qce_outcome(s, find_qce(s, **kw), Scheme.QCG)


def comp_outcome(s, **kw):
    return competitive_scheme(s, **kw)


def swm_outcome(s):
    r = solve_swm(s)
    return EquilibriumOutcome(Scheme.SWM, None, r.x, np.zeros(s.n_mnos), r.welfare, r.welfare,
                              "welfare", r.kkt_residual, r.lam, None, {"iterations": r.iterations})


_BUILDERS = {Scheme.COOP: coop_outcome, Scheme.COMP: comp_outcome, Scheme.QCG: qcg_outcome,
             Scheme.FT: ft_outcome, Scheme.NTP: solve_ntp, Scheme.SWM: swm_outcome}

CSV_COLUMNS = ("scheme", "profit_total", "profit_per_mno", "payoff", "welfare",
               "profit_ratio_ntp", "payoff_ratio_ntp", "welfare_ratio_ntp", "error")


def _ratio(a, b):
    if b == 0:
        return np.nan if a == 0 else np.copysign(np.inf, a)
    return a / b


@dataclass
class ComparisonRow:
    scheme: Scheme
    outcome: EquilibriumOutcome = None
    error: str = None
    profit_ratio: float = np.nan
    payoff_ratio: float = np.nan
    welfare_ratio: float = np.nan

    @property
    def ok(self):
        return self.outcome is not None

    @property
    def profit(self):
        return self.outcome.total_profit if self.ok else np.nan

    @property
    def payoff(self):
        return self.outcome.J if self.ok else np.nan

    @property
    def welfare(self):
        return self.outcome.welfare if self.ok else np.nan

    def as_record(self):
        V = [] if not self.ok else [float(v) for v in self.outcome.V]
        return {"scheme": Scheme(self.scheme).value, "profit_total": self.profit,
                "profit_per_mno": json.dumps(V), "payoff": self.payoff, "welfare": self.welfare,
                "profit_ratio_ntp": self.profit_ratio, "payoff_ratio_ntp": self.payoff_ratio,
                "welfare_ratio_ntp": self.welfare_ratio, "error": self.error or ""}


@dataclass
class Comparison:
    rows: list

    def __getitem__(self, scheme):
        scheme = Scheme(scheme)
        for r in self.rows:
            if r.scheme is scheme:
                return r
        raise KeyError(scheme)

    def __iter__(self):
        return iter(self.rows)

    def to_csv(self):
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
        w.writeheader()
        for r in self.rows:
            rec = r.as_record()
            w.writerow({k: (repr(float(v)) if isinstance(v, float) else v) for k, v in rec.items()})
        return buf.getvalue()


def compare_schemes(s, schemes=SCHEMES):
    """Run each scheme on ``s`` and report its metrics and ratios against NTP.

    A scheme that raises is recorded with its error message; the others are
    still reported.
    """
    rows = []
    for sc in schemes:
        sc = Scheme(sc)
        try:
            rows.append(ComparisonRow(sc, _BUILDERS[sc](s)))
        except (MCAError, ValueError, ArithmeticError) as exc:
            rows.append(ComparisonRow(sc, error=f"{type(exc).__name__}: {exc}"))
    ref = next((r for r in rows if r.scheme is Scheme.NTP and r.ok), None)
    if ref is None and Scheme.NTP not in [r.scheme for r in rows]:
        try:
            ref = ComparisonRow(Scheme.NTP, solve_ntp(s))
        except (MCAError, ValueError, ArithmeticError):
            ref = None
    if ref is not None:
        for r in rows:
            if r.ok:
                r.profit_ratio = _ratio(r.profit, ref.profit)
                r.payoff_ratio = _ratio(r.payoff, ref.payoff)
                r.welfare_ratio = _ratio(r.welfare, ref.welfare)
    return Comparison(rows)
