"""Parametric utility families and the demand side of the market.

Four families are supported::

    alpha_fair    theta * x**(1 - alpha) / (1 - alpha)      theta > 0, 0 < alpha < 1
    logarithmic   theta * log(a + x)                        theta > 0, a >= 0
    exponential   1 - exp(-theta * x)                       theta > 0
    quadratic     a * x**2 + b * x                          a < 0, b > 0

Demand ``d(p) = argmax_{x >= 0} U(x) - p x`` is closed form for each family.
"""

from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import _kernels as K
from .errors import DomainError

#: grid size used by :func:`check_assumption2`
ASSUMPTION_GRID = 1000


class Family(str, Enum):
    ALPHA_FAIR = "alpha_fair"
    LOGARITHMIC = "logarithmic"
    EXPONENTIAL = "exponential"
    QUADRATIC = "quadratic"


_CODES = {
    Family.ALPHA_FAIR: K.ALPHA_FAIR,
    Family.LOGARITHMIC: K.LOG,
    Family.EXPONENTIAL: K.EXP,
    Family.QUADRATIC: K.QUADRATIC,
}

_ALIASES = {"log": Family.LOGARITHMIC, "exp": Family.EXPONENTIAL,
            "isoelastic": Family.ALPHA_FAIR, "alpha-fair": Family.ALPHA_FAIR}


@dataclass(frozen=True)
class UtilityFunction:
    """Immutable utility of one user.

    Parameters
    ----------
    family : Family
    p1, p2 : float
        Family parameters: (theta, alpha), (theta, a), (theta, unused), (a, b).
    xi : float
        Additive constant of the isoelastic form; carried for round trips,
        it never enters marginals or demand.
    """

    family: Family
    p1: float
    p2: float = 0.0
    xi: float = 0.0

    def __post_init__(self):
        fam = Family(self.family)
        object.__setattr__(self, "family", fam)
        p1, p2 = float(self.p1), float(self.p2)
        if not (np.isfinite(p1) and np.isfinite(p2)):
            raise DomainError("utility parameters must be finite")
        if fam is Family.ALPHA_FAIR:
            if p1 <= 0 or not 0.0 < p2 < 1.0:
                raise DomainError(f"alpha_fair needs theta > 0 and alpha in (0, 1), got {p1}, {p2}")
        elif fam is Family.LOGARITHMIC:
            # a = 0 would make U(0) = -inf and the marginal at zero infinite
            if p1 <= 0 or p2 <= 0:
                raise DomainError(f"logarithmic needs theta > 0 and a > 0, got {p1}, {p2}")
        elif fam is Family.EXPONENTIAL:
            if p1 <= 0:
                raise DomainError(f"exponential needs theta > 0, got {p1}")
            p2 = 0.0
        else:
            if p1 >= 0 or p2 <= 0:
                raise DomainError(f"quadratic needs a < 0 and b > 0, got {p1}, {p2}")
        object.__setattr__(self, "p1", p1)
        object.__setattr__(self, "p2", p2)
        object.__setattr__(self, "xi", float(self.xi))

    # constructors -----------------------------------------------------------
    @classmethod
    def alpha_fair(cls, theta, alpha, xi=0.0):
        return cls(Family.ALPHA_FAIR, theta, alpha, xi)

    @classmethod
    def logarithmic(cls, theta, a=1.0):
        return cls(Family.LOGARITHMIC, theta, a)

    @classmethod
    def exponential(cls, theta):
        return cls(Family.EXPONENTIAL, theta)

    @classmethod
    def quadratic(cls, a, b):
        return cls(Family.QUADRATIC, a, b)

    # encoding ---------------------------------------------------------------
    @property
    def code(self):
        return _CODES[self.family]

    @property
    def theta(self):
        if self.family is Family.QUADRATIC:
            raise AttributeError("quadratic utility has no theta")
        return self.p1

    @property
    def peak(self):
        """Upper end of the domain (the quadratic's maximum, else inf)."""
        if self.family is Family.QUADRATIC:
            return self.p2 / (-2.0 * self.p1)
        return np.inf

    def to_dict(self):
        f = self.family
        if f is Family.ALPHA_FAIR:
            d = {"family": f.value, "theta": self.p1, "alpha": self.p2}
            if self.xi:
                d["xi"] = self.xi
            return d
        if f is Family.LOGARITHMIC:
            return {"family": f.value, "theta": self.p1, "a": self.p2}
        if f is Family.EXPONENTIAL:
            return {"family": f.value, "theta": self.p1}
        return {"family": f.value, "a": self.p1, "b": self.p2}

    @classmethod
    def from_dict(cls, d):
        name = str(d["family"]).lower()
        fam = _ALIASES.get(name) or Family(name)
        if fam is Family.ALPHA_FAIR:
            return cls(fam, d["theta"], d["alpha"], d.get("xi", 0.0))
        if fam is Family.LOGARITHMIC:
            return cls(fam, d["theta"], d.get("a", 1.0))
        if fam is Family.EXPONENTIAL:
            return cls(fam, d["theta"])
        return cls(fam, d["a"], d["b"])

    # evaluation -------------------------------------------------------------
    def _check_x(self, x):
        x = float(x)
        if not x >= 0.0:
            raise DomainError(f"quantity must be nonnegative, got {x}")
        if x > self.peak * (1 + 1e-12):
            raise DomainError(f"quadratic utility evaluated past its peak {self.peak}")
        return x

    def value(self, x):
        x = self._check_x(x)
        return K.u_value(self.code, self.p1, self.p2, x)

    def marginal(self, x):
        x = self._check_x(x)
        return K.u_d1(self.code, self.p1, self.p2, x)

    def marginal_d1(self, x):
        x = self._check_x(x)
        return K.u_d2(self.code, self.p1, self.p2, x)

    def marginal_d2(self, x):
        x = self._check_x(x)
        return K.u_d3(self.code, self.p1, self.p2, x)

    def marginal_at_zero(self):
        return K.u_marginal_zero(self.code, self.p1, self.p2)

    def demand(self, p):
        p = float(p)
        if not p > 0.0:
            raise DomainError(f"price must be positive, got {p}")
        return K.u_demand(self.code, self.p1, self.p2, p)

    def demand_slope(self, p):
        p = float(p)
        if not p > 0.0:
            raise DomainError(f"price must be positive, got {p}")
        return K.u_demand_d1(self.code, self.p1, self.p2, p)

    def revenue(self, y):
        """Willingness to pay ``y * U'(y)``."""
        y = self._check_x(y)
        return K.f_value(1, self.code, self.p1, self.p2, y)

    def prudence(self, x):
        x = float(x)
        if not x > 0.0:
            raise DomainError(f"prudence needs x > 0, got {x}")
        self._check_x(x)
        u2 = K.u_d2(self.code, self.p1, self.p2, x)
        if u2 == 0.0:
            raise DomainError("prudence undefined where U'' = 0")
        return -x * K.u_d3(self.code, self.p1, self.p2, x) / u2

    def check_assumption2(self, x_max):
        x_max = float(x_max)
        if not x_max > 0:
            raise DomainError("x_max must be positive")
        hi = min(x_max, self.peak)
        grid = np.linspace(hi / ASSUMPTION_GRID, hi, ASSUMPTION_GRID)
        return max(self.prudence(x) for x in grid) <= 2.0 + 1e-9


# module-level functional API ------------------------------------------------

def value(u, x):
    return u.value(x)


def marginal(u, x):
    return u.marginal(x)


def demand(u, p):
    return u.demand(p)


def prudence(u, x):
    return u.prudence(x)


def check_assumption2(u, x_max):
    return u.check_assumption2(x_max)


def pack(utilities):
    """Encode a sequence of utilities as ``(fam, pa, pb)`` kernel arrays."""
    fam = np.array([u.code for u in utilities], dtype=np.int64)
    pa = np.array([u.p1 for u in utilities], dtype=float)
    pb = np.array([u.p2 for u in utilities], dtype=float)
    return fam, pa, pb


def aggregate_demand(utilities, p):
    p = float(p)
    if not p > 0:
        raise DomainError(f"price must be positive, got {p}")
    return K.agg_demand(*pack(utilities), p)


def inverse_demand(utilities, q):
    """Price at which aggregate demand equals ``q``.

    ``q = 0`` maps to the largest marginal utility at zero (possibly inf).
    """
    q = float(q)
    if q < 0:
        raise DomainError(f"quantity must be nonnegative, got {q}")
    p = K.inverse_demand(*pack(utilities), q)
    if p < 0:
        raise DomainError(f"aggregate demand never reaches {q}")
    return p


def inverse_demand_slope(utilities, q):
    """Derivative of :func:`inverse_demand` at ``q`` (``1 / D'(pi(q))``)."""
    fam, pa, pb = pack(utilities)
    p = inverse_demand(utilities, q)
    d = K.agg_demand_d1(fam, pa, pb, p)
    if d >= 0:
        raise DomainError("aggregate demand is flat at this price")
    return 1.0 / d
