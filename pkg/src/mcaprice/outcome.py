"""Scheme-independent equilibrium record and profit/payoff accounting."""

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .upm import traffic_at_delivered_prices


class Scheme(str, Enum):
    COOP = "COOP"
    COMP = "COMP"
    QCG = "QCG"
    FT = "FT"
    NTP = "NTP"
    SWM = "SWM"


def mno_profits(s, p, x):
    """Per-MNO profit ``sum_{j in I_n} sum_i (p_i - e~[i, j]) x[i, j]``."""
    margin = np.asarray(p, float)[:, None] - s.delivered_cost
    per_link = np.sum(np.where(x > 0, margin, 0.0) * x, axis=0)
    return np.bincount(s.subscription, weights=per_link, minlength=s.n_mnos)


def social_welfare(s, x):
    """``sum_i (U_i(y_i) - U_i(0)) - sum e~ x``; utilities are measured from zero traffic."""
    y = x.sum(axis=1)
    u = sum(u.value(max(y[i], 0.0)) - u.value(0.0) for i, u in enumerate(s.utilities))
    return float(u - np.sum(s.delivered_cost * x))


@dataclass
class EquilibriumOutcome:
    """Prices, traffic and the three comparison metrics of one scheme.

    ``V`` is the per-MNO profit, ``J`` the users' total payoff and
    ``welfare = J + sum(V)``. ``p`` is None for the welfare benchmark.
    """

    scheme: Scheme
    p: np.ndarray
    x: np.ndarray
    V: np.ndarray
    J: float
    welfare: float
    regime: str = None
    kkt_residual: float = 0.0
    lam: np.ndarray = None
    h: np.ndarray = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def total_profit(self):
        return float(np.sum(self.V))

    def to_dict(self):
        arr = lambda a: None if a is None else np.asarray(a).tolist()
        return {"scheme": Scheme(self.scheme).value, "p": arr(self.p), "x": arr(self.x),
                "V": arr(self.V), "profit_total": self.total_profit, "J": self.J,
                "welfare": self.welfare, "regime": self.regime, "kkt_residual": self.kkt_residual,
                "lambda": arr(self.lam), "h": arr(self.h), "diagnostics": _jsonable(self.diagnostics)}


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (np.floating, np.integer, np.bool_)):
        return v.item()
    if isinstance(v, Enum):
        return v.value
    return v


def priced_outcome(s, scheme, p, x, regime=None, h=None, diagnostics=None):
    """Outcome for delivered prices ``p`` and traffic ``x`` (Stage-II certified)."""
    p = np.asarray(p, float)
    ts = traffic_at_delivered_prices(s, p, x)
    V = mno_profits(s, p, x)
    if h is None:
        h = np.maximum(p[:, None] - s.link_energy, 0.0)
    return EquilibriumOutcome(Scheme(scheme), p, x, V, ts.payoff, social_welfare(s, x), regime,
                              ts.kkt_residual, ts.lam, h, dict(diagnostics or {}))
