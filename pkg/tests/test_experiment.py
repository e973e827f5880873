import csv
import io
import json

import numpy as np
import pytest

from mcaprice import ConfigError, ExperimentConfig, ScenarioConfig, Sweep, compare_schemes, emit_results, run_experiment
from mcaprice.benchmarks import SCHEMES
from mcaprice.experiment import RESULT_COLUMNS, load_config, manifest, results_csv
from mcaprice.scenario import sample_scenario

SMALL = ScenarioConfig(n_users=4)


def test_single_replication_equals_direct_comparison():
    cfg = ExperimentConfig(replications=1, seed=11, scenario=SMALL)
    pt = run_experiment(cfg).points[0]
    cmp = compare_schemes(sample_scenario(SMALL, 11))
    for row in cmp:
        st = pt[row.scheme]
        assert st.n == 1
        assert st.mean == {"profit": row.profit, "payoff": row.payoff, "welfare": row.welfare}
        assert np.isnan(st.sem["profit"])
        assert st.ratio["profit"] == pytest.approx(row.profit_ratio, rel=1e-12)


def test_byte_identical_output(tmp_path):
    cfg = ExperimentConfig(replications=3, seed=5, scenario=SMALL, schemes=("COOP", "NTP"))
    a = emit_results(run_experiment(cfg), tmp_path / "a")
    b = emit_results(run_experiment(cfg.replace(workers=2)), tmp_path / "b")
    assert open(a[0], "rb").read() == open(b[0], "rb").read()
    assert [p.rsplit("/", 1)[1] for p in a] == ["results.csv", "manifest.json"]


def test_sweep_rows_and_order(tmp_path):
    sweep = Sweep("cost_ratio", (1.0, 0.25, 0.5, 0.75, 0.1))
    cfg = ExperimentConfig(replications=1, scenario=SMALL, sweep=sweep)
    res = run_experiment(cfg, keep_samples=True)
    rows = list(csv.DictReader(io.StringIO(results_csv(res))))
    assert len(rows) == 30 and tuple(rows[0]) == RESULT_COLUMNS
    etas = [float(r["sweep_value"]) for r in rows]
    assert etas == sorted(etas)
    assert [r["scheme"] for r in rows[:6]] == [s.value for s in SCHEMES]
    assert res.points[0].samples["COOP"].shape == (1, 3)


def test_two_scheme_run_and_json(tmp_path):
    cfg = ExperimentConfig(replications=2, scenario=SMALL, schemes=("COOP", "NTP"))
    res = run_experiment(cfg)
    paths = emit_results(res, tmp_path, format="json")
    rows = json.loads(open(paths[0]).read())
    assert len(rows) == 2 and rows[0]["scheme"] == "COOP"
    assert rows[1]["profit_ratio_ntp"] == 1.0
    m = json.loads(open(paths[1]).read())
    assert m["seeds"] == {"first": 0, "last": 1, "rule": "replication r uses seed + r"}
    assert m["error_bars"] == "standard error of the mean"
    assert ExperimentConfig.from_dict(m["config"]) == cfg


def test_accounting_identity_per_point():
    cfg = ExperimentConfig(replications=3, scenario=SMALL)
    for st in run_experiment(cfg).points[0].stats:
        if st.scheme.value != "SWM":
            assert st.mean["welfare"] == pytest.approx(st.mean["payoff"] + st.mean["profit"], rel=1e-9)


def test_competition_below_no_tethering_at_rho_endpoints():
    cfg = ExperimentConfig(replications=8, sweep=Sweep("rho_lte", (0.0, 1.0)), schemes=("COMP", "NTP"))
    for pt in run_experiment(cfg).points:
        assert pt["COMP"].mean["profit"] <= pt["NTP"].mean["profit"]


def test_failures_counted_and_warned(monkeypatch):
    import mcaprice.experiment as ex
    from conftest import two_user

    # every other replication gets Wi-Fi energy costs, where free tethering is undefined
    def sampler(cfg, seed):
        return two_user(wifi=[[0.0, 0.1], [0.1, 0.0]] if seed % 2 else None)

    monkeypatch.setattr(ex, "sample_scenario", sampler)
    cfg = ExperimentConfig(replications=4, schemes=("FT", "NTP"))
    with pytest.warns(RuntimeWarning, match="2 of 4 replications failed"):
        res = run_experiment(cfg)
    assert res.failures == 2
    assert res.points[0]["FT"].n == 2
    assert res.points[0]["FT"].mean["profit"] == pytest.approx(5 / 3, abs=1e-8)


def test_config_errors(tmp_path):
    with pytest.raises(ConfigError):
        ExperimentConfig(replications=0)
    with pytest.raises(ConfigError):
        Sweep("eta", (0.5,))
    with pytest.raises(ConfigError):
        Sweep("cost_ratio", (1.5,))
    with pytest.raises(ConfigError):
        Sweep("rho_lte", ())
    with pytest.raises(ConfigError):
        ExperimentConfig(schemes=("BEST",))
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"reps": 3})
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps({"replications": 4, "sweep": {"parameter": "rho_lte", "values": [1, 0]}}))
    cfg = load_config(p)
    assert cfg.sweep.values == (0.0, 1.0)
    with pytest.raises(ConfigError):
        emit_results(run_experiment(cfg.replace(replications=1, scenario=SMALL, schemes=("NTP",))),
                     tmp_path, format="xml")


def test_unwritable_output_dir(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    res = run_experiment(ExperimentConfig(replications=1, scenario=SMALL, schemes=("NTP",)))
    with pytest.raises(OSError, match="file"):
        emit_results(res, blocker / "out")
    assert manifest(res)["backend"] in ("numba", "numpy")
