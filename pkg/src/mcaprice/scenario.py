"""Network instances, random generation and JSON serialization.

Indices are 0-based throughout. User ``j`` owns downlink ``j``; a link
``(i, j)`` delivers data to client ``i`` through gateway ``j``.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .utility import UtilityFunction


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Scenario:
    """One MCA instance.

    Parameters
    ----------
    n_mnos : int
    subscription : array of int, shape (n,)
        MNO of each user.
    capacity, op_cost, energy_down : arrays, shape (n,)
        Downlink capacity, operator cost and cellular energy cost per user.
    energy_wifi : array, shape (n, n)
        ``energy_wifi[i, j]`` is the Wi-Fi energy cost of client i receiving
        through gateway j. The diagonal is zero.
    utilities : tuple of UtilityFunction
    """

    n_mnos: int
    subscription: np.ndarray
    capacity: np.ndarray
    op_cost: np.ndarray
    energy_down: np.ndarray
    energy_wifi: np.ndarray = None
    utilities: tuple = field(default=())

    def __post_init__(self):
        n = len(self.utilities)
        object.__setattr__(self, "n_mnos", int(self.n_mnos))
        object.__setattr__(self, "subscription", _frozen(self.subscription, np.int64).reshape(-1))
        for name in ("capacity", "op_cost", "energy_down"):
            object.__setattr__(self, name, _frozen(getattr(self, name)).reshape(-1))
        wifi = np.zeros((n, n)) if self.energy_wifi is None else self.energy_wifi
        object.__setattr__(self, "energy_wifi", _frozen(wifi).reshape(n, n) if n else _frozen(np.zeros((0, 0))))
        object.__setattr__(self, "utilities", tuple(self.utilities))
        for name in ("subscription", "capacity", "op_cost", "energy_down"):
            if getattr(self, name).shape != (n,):
                raise ConfigError(f"{name} must have one entry per user ({n})")

    # derived quantities -----------------------------------------------------
    @property
    def n_users(self):
        return len(self.utilities)

    @property
    def link_energy(self):
        """``c[i, j] = energy_down[j] + energy_wifi[i, j]``."""
        return self.energy_down[None, :] + self.energy_wifi

    @property
    def delivered_cost(self):
        """``e~[i, j] = op_cost[j] + c[i, j]``."""
        return self.op_cost[None, :] + self.link_energy

    @property
    def downlink_cost(self):
        """Delivered cost of each downlink when Wi-Fi energy is zero."""
        return self.op_cost + self.energy_down

    @property
    def zero_wifi(self):
        return not np.any(self.energy_wifi)

    def mno_links(self, n):
        return np.flatnonzero(self.subscription == n)

    def replace(self, **changes):
        kw = dict(n_mnos=self.n_mnos, subscription=self.subscription, capacity=self.capacity,
                  op_cost=self.op_cost, energy_down=self.energy_down,
                  energy_wifi=self.energy_wifi, utilities=self.utilities)
        kw.update(changes)
        return Scenario(**kw)

    def subset(self, users):
        """Scenario restricted to ``users`` (MNO count unchanged)."""
        idx = np.asarray(users, dtype=np.int64)
        return Scenario(self.n_mnos, self.subscription[idx], self.capacity[idx], self.op_cost[idx],
                        self.energy_down[idx], self.energy_wifi[np.ix_(idx, idx)],
                        tuple(self.utilities[i] for i in idx))

    def __eq__(self, other):
        if not isinstance(other, Scenario):
            return NotImplemented
        return (self.n_mnos == other.n_mnos and self.utilities == other.utilities
                and all(np.array_equal(getattr(self, k), getattr(other, k))
                        for k in ("subscription", "capacity", "op_cost", "energy_down", "energy_wifi")))

    __hash__ = None

    # serialization ------------------------------------------------------------
    def to_dict(self):
        users = [{"subscription": int(self.subscription[i]),
                  "capacity": float(self.capacity[i]),
                  "op_cost": float(self.op_cost[i]),
                  "energy_down": float(self.energy_down[i]),
                  "utility": self.utilities[i].to_dict()} for i in range(self.n_users)]
        wifi = "zero" if self.zero_wifi else self.energy_wifi.tolist()
        return {"mnos": self.n_mnos, "users": users, "energy_wifi": wifi}

    @classmethod
    def from_dict(cls, d):
        try:
            users = d["users"]
            n = len(users)
            wifi = d.get("energy_wifi", "zero")
            if isinstance(wifi, str):
                if wifi != "zero":
                    raise ConfigError(f"energy_wifi must be a matrix or 'zero', got {wifi!r}")
                wifi = np.zeros((n, n))
            return cls(n_mnos=d["mnos"],
                       subscription=[u["subscription"] for u in users],
                       capacity=[u["capacity"] for u in users],
                       op_cost=[u.get("op_cost", 0.0) for u in users],
                       energy_down=[u.get("energy_down", 0.0) for u in users],
                       energy_wifi=np.asarray(wifi, dtype=float),
                       utilities=tuple(UtilityFunction.from_dict(u["utility"]) for u in users))
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"malformed scenario: {exc}") from exc

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def load_scenario(path):
    with open(path) as fh:
        return Scenario.from_json(fh.read())


def save_scenario(s, path):
    with open(path, "w") as fh:
        fh.write(s.to_json(indent=2))


# ---------------------------------------------------------------------------
# validation and participation
# ---------------------------------------------------------------------------

@dataclass
class Diagnostics:
    violations: list
    non_participating: list

    @property
    def valid(self):
        return not self.violations


def participating(s):
    """Mask of users with ``U'(0) > min_j e~[i, j]`` (positive demand is possible)."""
    if s.n_users == 0:
        return np.zeros(0, dtype=bool)
    emin = s.delivered_cost.min(axis=1)
    return np.array([u.marginal_at_zero() > emin[i] for i, u in enumerate(s.utilities)])


def validate(s):
    """Collect invariant violations and non-participating users."""
    v = []
    if s.n_mnos < 1:
        v.append("at least one MNO is required")
    bad = np.flatnonzero((s.subscription < 0) | (s.subscription >= s.n_mnos))
    v += [f"user {i}: subscription {s.subscription[i]} is not a valid MNO index" for i in bad]
    for name in ("capacity", "op_cost", "energy_down"):
        arr = getattr(s, name)
        for i in np.flatnonzero(~np.isfinite(arr)):
            v.append(f"user {i}: {name} is not finite")
    v += [f"user {i}: capacity {s.capacity[i]} is not positive" for i in np.flatnonzero(s.capacity <= 0)]
    v += [f"user {i}: op_cost {s.op_cost[i]} is negative" for i in np.flatnonzero(s.op_cost < 0)]
    v += [f"user {i}: energy_down {s.energy_down[i]} is negative" for i in np.flatnonzero(s.energy_down < 0)]
    if s.n_users:
        w = s.energy_wifi
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            v.append("energy_wifi must be finite and nonnegative")
        if np.any(np.diag(w) != 0):
            v.append("energy_wifi diagonal must be zero")
    if v:
        return Diagnostics(v, [])
    return Diagnostics(v, [int(i) for i in np.flatnonzero(~participating(s))])


def require_solvable(s):
    """Raise ConfigError on structural problems; zero capacities are allowed."""
    d = validate(s)
    hard = [m for m in d.violations if "is not positive" not in m]
    zero_cap = np.any(s.capacity < 0)
    if hard or zero_cap:
        raise ConfigError("; ".join(hard) or "negative capacity")
    return d


def filter_participants(s, return_removed=False):
    """Drop users that would never buy; idempotent."""
    keep = np.flatnonzero(participating(s)) if s.n_users else np.zeros(0, dtype=np.int64)
    out = s if len(keep) == s.n_users else s.subset(keep)
    if return_removed:
        removed = sorted(set(range(s.n_users)) - set(keep.tolist()))
        return out, removed
    return out


# ---------------------------------------------------------------------------
# random generation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TruncNormalSpec:
    """Normal with mean ``mu`` and standard deviation ``sqrt(kappa_sq)`` truncated
    to ``[mu - 2 kappa_sq, mu + 2 kappa_sq]`` (lower end clamped at 0)."""

    mu: float
    kappa_sq: float
    nonneg: bool = True

    def __post_init__(self):
        if not self.kappa_sq > 0:
            raise ConfigError(f"kappa_sq must be positive, got {self.kappa_sq}")
        lo, hi = self.support
        if not hi > lo:
            raise ConfigError(f"empty truncated-normal support [{lo}, {hi}]")

    @property
    def support(self):
        lo = self.mu - 2.0 * self.kappa_sq
        if self.nonneg:
            lo = max(lo, 0.0)
        return lo, self.mu + 2.0 * self.kappa_sq

    def sample(self, rng, size):
        lo, hi = self.support
        sd = np.sqrt(self.kappa_sq)
        out = np.empty(size)
        filled = 0
        while filled < size:
            draw = rng.normal(self.mu, sd, size=max(2 * (size - filled), 8))
            draw = draw[(draw >= lo) & (draw <= hi)]
            take = min(len(draw), size - filled)
            out[filled:filled + take] = draw[:take]
            filled += take
        return out

    def scaled(self, factor):
        return TruncNormalSpec(self.mu * factor, self.kappa_sq * factor, self.nonneg)

    def to_dict(self):
        return {"mu": self.mu, "kappa_sq": self.kappa_sq}

    @classmethod
    def from_dict(cls, d):
        if isinstance(d, (list, tuple)):
            return cls(float(d[0]), float(d[1]))
        return cls(float(d["mu"]), float(d["kappa_sq"]))


_TN_FIELDS = ("theta", "cap_lte", "cap_3g", "cost_lte", "cost_3g")


@dataclass(frozen=True)
class ScenarioConfig:
    """Distributional description of random scenarios (defaults: 10 users, 2 MNOs)."""

    n_users: int = 10
    n_mnos: int = 2
    rho_lte: float = 0.4
    utility_family: str = "alpha_fair"
    alpha: float = 0.4
    log_a: float = 1.0
    theta: TruncNormalSpec = TruncNormalSpec(550.0, 200.0)
    cap_lte: TruncNormalSpec = TruncNormalSpec(14.0, 3.0)
    cap_3g: TruncNormalSpec = TruncNormalSpec(1.0, 0.3)
    cost_lte: TruncNormalSpec = TruncNormalSpec(80.0, 10.0)
    cost_3g: TruncNormalSpec = TruncNormalSpec(350.0, 40.0)
    energy_down: float = 7.5
    #: study horizon; a downlink of rate C carries C * horizon units per run
    horizon: float = 10.0

    def __post_init__(self):
        if self.n_users < 0 or self.n_mnos < 1:
            raise ConfigError("need n_users >= 0 and n_mnos >= 1")
        if not 0.0 <= self.rho_lte <= 1.0:
            raise ConfigError(f"rho_lte must be a probability, got {self.rho_lte}")
        if self.energy_down < 0:
            raise ConfigError("energy_down must be nonnegative")
        if not self.horizon > 0:
            raise ConfigError("horizon must be positive")
        for name in _TN_FIELDS:
            v = getattr(self, name)
            if not isinstance(v, TruncNormalSpec):
                object.__setattr__(self, name, TruncNormalSpec.from_dict(v))
        self.utility(1.0)

    def utility(self, theta):
        fam = self.utility_family
        if fam in ("alpha_fair", "isoelastic"):
            return UtilityFunction.alpha_fair(theta, self.alpha)
        if fam in ("logarithmic", "log"):
            return UtilityFunction.logarithmic(theta, self.log_a)
        raise ConfigError(f"unsupported utility family for sampling: {fam}")

    def replace(self, **kw):
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d.update(kw)
        return ScenarioConfig(**d)

    def to_dict(self):
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        for name in _TN_FIELDS:
            d[name] = d[name].to_dict()
        return d

    @classmethod
    def from_dict(cls, d):
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown scenario config keys: {sorted(unknown)}")
        return cls(**d)


def sample_scenario(cfg, seed):
    """Draw one scenario; identical ``(cfg, seed)`` give identical scenarios."""
    rng = np.random.default_rng(seed)
    n = cfg.n_users
    perm = rng.permutation(n)
    sub = np.empty(n, dtype=np.int64)
    sub[perm] = np.arange(n) % cfg.n_mnos
    lte = rng.random(n) < cfg.rho_lte
    theta = cfg.theta.sample(rng, n)
    cap = np.where(lte, cfg.cap_lte.sample(rng, n), cfg.cap_3g.sample(rng, n))
    cost = np.where(lte, cfg.cost_lte.sample(rng, n), cfg.cost_3g.sample(rng, n))
    return Scenario(cfg.n_mnos, sub, cap * cfg.horizon, cost, np.full(n, float(cfg.energy_down)),
                    np.zeros((n, n)), tuple(cfg.utility(t) for t in theta))
