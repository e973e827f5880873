"""Monte Carlo comparison of pricing schemes on random scenarios.

Replication ``r`` of every sweep point samples its scenario with seed
``seed + r``, runs :func:`compare_schemes` and the metrics are averaged in
replication order. Error bars are standard errors of the mean.
"""

import csv
import io
import json
import logging
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _accel
from .benchmarks import SCHEMES, compare_schemes
from .errors import ConfigError
from .outcome import Scheme
from .scenario import ScenarioConfig, TruncNormalSpec, sample_scenario

log = logging.getLogger(__name__)

SWEEP_PARAMETERS = ("lte_capacity_mean", "rho_lte", "cost_ratio")
METRICS = ("profit", "payoff", "welfare")
#: fraction of failed replications above which a warning is issued
FAILURE_WARN = 0.01


@dataclass(frozen=True)
class Sweep:
    """One swept parameter.

    ``lte_capacity_mean`` sets the LTE capacity mean ``s``, ``rho_lte`` the LTE
    share and ``cost_ratio`` the ratio ``eta`` with
    ``e_LTE ~ TN(eta * mu_3G, eta * kappa_3G^2)``.
    """

    parameter: str
    values: tuple

    def __post_init__(self):
        if self.parameter not in SWEEP_PARAMETERS:
            raise ConfigError(f"unknown sweep parameter {self.parameter!r}; use one of {SWEEP_PARAMETERS}")
        vals = tuple(sorted(float(v) for v in self.values))
        if not vals:
            raise ConfigError("sweep needs at least one value")
        if self.parameter in ("rho_lte", "cost_ratio") and any(not 0.0 <= v <= 1.0 for v in vals):
            raise ConfigError(f"{self.parameter} values must lie in [0, 1]")
        if self.parameter == "cost_ratio" and any(v == 0.0 for v in vals):
            raise ConfigError("cost_ratio must be positive")
        if self.parameter == "lte_capacity_mean" and any(not v > 0 for v in vals):
            raise ConfigError("lte_capacity_mean values must be positive")
        object.__setattr__(self, "values", vals)

    def apply(self, cfg, v):
        if self.parameter == "lte_capacity_mean":
            return cfg.replace(cap_lte=TruncNormalSpec(v, cfg.cap_lte.kappa_sq))
        if self.parameter == "rho_lte":
            return cfg.replace(rho_lte=v)
        return cfg.replace(cost_lte=TruncNormalSpec(v * cfg.cost_3g.mu, v * cfg.cost_3g.kappa_sq))

    def to_dict(self):
        return {"parameter": self.parameter, "values": list(self.values)}


@dataclass(frozen=True)
class ExperimentConfig:
    replications: int = 200
    seed: int = 0
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    sweep: Sweep = None
    schemes: tuple = SCHEMES
    workers: int = 1

    def __post_init__(self):
        if int(self.replications) < 1:
            raise ConfigError("replications must be at least 1")
        if int(self.workers) < 1:
            raise ConfigError("workers must be at least 1")
        if isinstance(self.scenario, dict):
            object.__setattr__(self, "scenario", ScenarioConfig.from_dict(self.scenario))
        if isinstance(self.sweep, dict):
            object.__setattr__(self, "sweep", Sweep(**self.sweep))
        try:
            schemes = tuple(Scheme(s) for s in self.schemes)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        object.__setattr__(self, "schemes", schemes)
        object.__setattr__(self, "replications", int(self.replications))
        object.__setattr__(self, "seed", int(self.seed))

    def points(self):
        """``(value, scenario config)`` per sweep point, values ascending."""
        if self.sweep is None:
            return [(None, self.scenario)]
        return [(v, self.sweep.apply(self.scenario, v)) for v in self.sweep.values]

    def replace(self, **kw):
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d.update(kw)
        return ExperimentConfig(**d)

    def to_dict(self):
        return {"replications": self.replications, "seed": self.seed, "scenario": self.scenario.to_dict(),
                "sweep": None if self.sweep is None else self.sweep.to_dict(),
                "schemes": [s.value for s in self.schemes], "workers": self.workers}

    @classmethod
    def from_dict(cls, d):
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown experiment config keys: {sorted(unknown)}")
        return cls(**d)


def load_config(path):
    try:
        with open(path) as fh:
            return ExperimentConfig.from_dict(json.load(fh))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


@dataclass
class SchemeStats:
    scheme: Scheme
    n: int
    mean: dict
    sem: dict
    ratio: dict

    def to_dict(self):
        return {"scheme": self.scheme.value, "n": self.n, "mean": self.mean, "sem": self.sem,
                "ratio_ntp": self.ratio}


@dataclass
class PointResult:
    value: float
    stats: list
    failures: int
    replications: int
    samples: dict = None

    def __getitem__(self, scheme):
        scheme = Scheme(scheme)
        for st in self.stats:
            if st.scheme is scheme:
                return st
        raise KeyError(scheme)


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    points: list

    @property
    def failures(self):
        return sum(p.failures for p in self.points)


def _one(args):
    cfg, seed, schemes = args
    s = sample_scenario(cfg, seed)
    comp = compare_schemes(s, schemes)
    out = {}
    for row in comp:
        if not row.ok:
            return None, f"{row.scheme.value}: {row.error}"
        out[row.scheme.value] = (row.profit, row.payoff, row.welfare)
    return out, None


def _sem(a):
    if len(a) < 2:
        return float("nan")
    return float(np.std(a, ddof=1) / np.sqrt(len(a)))


def _aggregate(value, records, schemes, failures, reps, keep):
    ok = [r for r in records if r is not None]
    stats = []
    ntp = Scheme.NTP.value
    for sc in schemes:
        arr = np.array([r[sc.value] for r in ok], dtype=float).reshape(len(ok), 3)
        mean = {m: float(np.mean(arr[:, k])) if len(ok) else float("nan") for k, m in enumerate(METRICS)}
        sem = {m: _sem(arr[:, k]) for k, m in enumerate(METRICS)}
        ratio = {}
        if any(s is Scheme.NTP for s in schemes) and len(ok):
            ref = np.array([r[ntp] for r in ok], dtype=float).reshape(len(ok), 3)
            for k, m in enumerate(METRICS):
                den = float(np.mean(ref[:, k]))
                ratio[m] = mean[m] / den if den != 0 else float("nan")
        else:
            ratio = {m: float("nan") for m in METRICS}
        stats.append(SchemeStats(sc, len(ok), mean, sem, ratio))
    samples = None
    if keep:
        samples = {sc.value: np.array([r[sc.value] for r in ok], dtype=float).reshape(len(ok), 3)
                   for sc in schemes}
    return PointResult(value, stats, failures, reps, samples)


def run_experiment(cfg, keep_samples=False):
    """Replicate :func:`compare_schemes` at every sweep point.

    Replications where any scheme fails are counted and excluded; a warning
    is issued when more than 1% of them fail.
    """
    points = []
    for value, scfg in cfg.points():
        jobs = [(scfg, cfg.seed + r, cfg.schemes) for r in range(cfg.replications)]
        if cfg.workers > 1:
            with ProcessPoolExecutor(max_workers=cfg.workers) as ex:
                res = list(ex.map(_one, jobs, chunksize=max(1, len(jobs) // (4 * cfg.workers))))
        else:
            res = [_one(j) for j in jobs]
        records = [r for r, _ in res]
        errors = [e for _, e in res if e is not None]
        for e in errors[:5]:
            log.debug("replication failed: %s", e)
        if len(errors) > FAILURE_WARN * cfg.replications:
            warnings.warn(f"{len(errors)} of {cfg.replications} replications failed at sweep value {value}",
                          RuntimeWarning, stacklevel=2)
        points.append(_aggregate(value, records, cfg.schemes, len(errors), cfg.replications, keep_samples))
    return ExperimentResult(cfg, points)


RESULT_COLUMNS = ("sweep_parameter", "sweep_value", "scheme", "n", "failures",
                  "profit_mean", "profit_sem", "payoff_mean", "payoff_sem", "welfare_mean", "welfare_sem",
                  "profit_ratio_ntp", "payoff_ratio_ntp", "welfare_ratio_ntp")


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def result_rows(result):
    param = result.config.sweep.parameter if result.config.sweep else ""
    rows = []
    for pt in result.points:
        for st in pt.stats:
            row = {"sweep_parameter": param, "sweep_value": pt.value, "scheme": st.scheme.value, "n": st.n,
                   "failures": pt.failures}
            for m in METRICS:
                row[f"{m}_mean"] = st.mean[m]
                row[f"{m}_sem"] = st.sem[m]
                row[f"{m}_ratio_ntp"] = st.ratio[m]
            rows.append(row)
    return rows


def results_csv(result):
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=RESULT_COLUMNS, lineterminator="\n")
    w.writeheader()
    for row in result_rows(result):
        w.writerow({k: _fmt(v) for k, v in row.items()})
    return buf.getvalue()


def _versions():
    import numba
    import scipy
    from importlib.metadata import PackageNotFoundError, version
    try:
        own = version("artifact")
    except PackageNotFoundError:
        own = "unknown"
    return {"artifact": own, "numpy": np.__version__, "scipy": scipy.__version__, "numba": numba.__version__}


def manifest(result):
    cfg = result.config
    return {"config": cfg.to_dict(),
            "seeds": {"first": cfg.seed, "last": cfg.seed + cfg.replications - 1,
                      "rule": "replication r uses seed + r"},
            "error_bars": "standard error of the mean",
            "failures": [{"sweep_value": p.value, "failed": p.failures, "replications": p.replications}
                         for p in result.points],
            "backend": _accel.backend(), "versions": _versions()}


def _write(path, text):
    try:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def emit_results(result, out_dir, format="csv"):
    """Write the results table and ``manifest.json`` into ``out_dir``.

    ``format="csv"`` writes ``results.csv``; ``"json"`` writes ``results.json``
    with the same rows. Both are byte-stable for fixed inputs.
    """
    if format not in ("csv", "json"):
        raise ConfigError(f"unknown format {format!r}")
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create {out_dir}: {exc}") from exc
    paths = []
    if format == "csv":
        p = os.path.join(out_dir, "results.csv")
        _write(p, results_csv(result))
    else:
        p = os.path.join(out_dir, "results.json")
        _write(p, json.dumps(result_rows(result), indent=2, sort_keys=True, allow_nan=True) + "\n")
    paths.append(p)
    m = os.path.join(out_dir, "manifest.json")
    _write(m, json.dumps(manifest(result), indent=2, sort_keys=True) + "\n")
    paths.append(m)
    return paths
