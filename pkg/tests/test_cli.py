import csv
import io
import json
import subprocess
import sys

import pytest

from mcaprice.cli import main
from mcaprice.scenario import save_scenario

from conftest import two_user


@pytest.fixture
def ex2_file(tmp_path, ex2):
    p = tmp_path / "ex2.json"
    save_scenario(ex2, p)
    return str(p)


def _json(capsys, argv):
    assert main(argv) == 0
    return json.loads(capsys.readouterr().out)


def test_solvers(capsys, ex2_file):
    assert _json(capsys, ["coop", "--scenario", ex2_file])["profit_total"] == pytest.approx(5 / 3, abs=1e-8)
    assert _json(capsys, ["ft", "--scenario", ex2_file])["profit_total"] == pytest.approx(5 / 3, abs=1e-8)
    assert _json(capsys, ["ntp", "--scenario", ex2_file])["profit_total"] == pytest.approx(1.3431457505, abs=1e-9)
    assert _json(capsys, ["swm", "--scenario", ex2_file])["welfare"] == pytest.approx(2.5451774445, abs=1e-9)
    d = _json(capsys, ["compete-price", "--scenario", ex2_file])
    assert d["regime"] == "NoEquilibrium" and d["path"] == "multi-operator"
    assert d["zeta"] == pytest.approx([8 / 3, 2.0])
    d = _json(capsys, ["compete-quantity", "--scenario", ex2_file, "--method", "mean_value", "--trace"])
    assert d["profile"]["q"] == pytest.approx([1.0, 0.46410161], abs=1e-6)
    assert len(d["profile"]["trace"]) > 1
    assert _json(capsys, ["compete", "--scenario", ex2_file])["regime"] == "quantity"


def test_solve_upm_price_formats(capsys, tmp_path, ex2_file):
    for data in ([[2, 2], [2, 2]], {"h": [[2, 2], [2, 2]]}, {"access": [2, 2], "tethering": [[0, 0], [0, 0]]}):
        p = tmp_path / "h.json"
        p.write_text(json.dumps(data))
        d = _json(capsys, ["solve-upm", "--scenario", ex2_file, "--prices", str(p)])
        assert [sum(r) for r in d["x"]] == pytest.approx([1.0, 1.0], abs=1e-9)


def test_compare_csv(capsys, ex2_file):
    assert main(["compare", "--scenario", ex2_file]) == 0
    rows = list(csv.DictReader(io.StringIO(capsys.readouterr().out)))
    assert [r["scheme"] for r in rows] == ["COOP", "COMP", "QCG", "FT", "NTP", "SWM"]
    assert json.loads(rows[0]["profit_per_mno"]) == pytest.approx([5 / 3, 0.0], abs=1e-8)


def test_regions_grid(capsys):
    assert main(["regions-2x2", "--theta", "4", "4", "--e", "1", "2", "--steps", "3",
                 "--c1-min", "1", "--c1-max", "10", "--c2-min", "1", "--c2-max", "1"]) == 0
    rows = list(csv.DictReader(io.StringIO(capsys.readouterr().out)))
    assert len(rows) == 9
    assert rows[0]["region"] == "NoPCE" and rows[-1]["region"] == "SingleOperatorPCE"
    assert main(["regions-2x2", "--theta", "10", "0.5", "--e", "1", "2", "--steps", "2"]) == 0
    assert "Undefined" in capsys.readouterr().out


def test_experiment_command(capsys, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"scenario": {"n_users": 4}, "schemes": ["COOP", "NTP"]}))
    out = tmp_path / "out"
    assert main(["experiment", "--config", str(cfg), "--out", str(out), "--replications", "2", "--seed", "3"]) == 0
    m = json.loads((out / "manifest.json").read_text())
    assert m["config"]["replications"] == 2 and m["seeds"]["first"] == 3
    assert (out / "results.csv").read_text().count("\n") == 3


def test_errors_exit_nonzero(capsys, tmp_path, ex2_file):
    assert main(["coop", "--scenario", str(tmp_path / "none.json")]) == 1
    assert "error:" in capsys.readouterr().err
    wifi = tmp_path / "wifi.json"
    save_scenario(two_user(wifi=[[0.0, 0.1], [0.1, 0.0]]), wifi)
    assert main(["ft", "--scenario", str(wifi)]) == 1
    with pytest.raises(SystemExit) as exc:
        main(["coop"])
    assert exc.value.code == 2


def test_module_entry_point(ex2_file):
    r = subprocess.run([sys.executable, "-m", "mcaprice", "ntp", "--scenario", ex2_file],
                       capture_output=True, text=True, check=True)
    assert json.loads(r.stdout)["scheme"] == "NTP"
