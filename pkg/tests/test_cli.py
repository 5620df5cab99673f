import json
import subprocess
import sys

import pytest

from ordlearn.cli import main

NORMAL = {"model": {"kind": "location", "family": "normal", "params": {"sigma": 1.0}, "state_window": [1, 3]},
          "utility": {"kind": "quadratic_loss"}}
LAPLACE = {"model": {"kind": "location", "family": "laplace", "params": {"b": 1.0}, "state_window": [1, 3]},
           "utility": {"kind": "quadratic_loss"}}
FINITE = {"model": {"kind": "finite", "states": [1, 2], "signals": [0, 1], "matrix": [[0.7, 0.4], [0.3, 0.6]]},
          "utility": {"actions": ["lo", "hi"], "matrix": [[1, 0], [0, 1]]}, "prior": [0.5, 0.5]}


def write(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg) if not isinstance(cfg, str) else cfg)
    return str(p)


def test_check_normal(tmp_path, capsys):
    assert main(["check", "--config", write(tmp_path, NORMAL), "--out", str(tmp_path / "o")]) == 0
    doc = json.loads((tmp_path / "o" / "check.json").read_text())
    assert doc["dub"]["verdict"] == "holds"
    assert doc["unbounded_beliefs"]["verdict"] == "fails"
    assert doc["implication_audit"]["verdict"] == "holds"
    assert "implication_audit" in capsys.readouterr().out


def test_check_laplace_reports_certificate(tmp_path):
    assert main(["check", "--config", write(tmp_path, LAPLACE), "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "check.json").read_text())
    assert doc["dub"]["verdict"] == "fails" and doc["dub"]["method"] == "analytic"


@pytest.mark.parametrize("bad", [
    "{not json",
    {"model": {"kind": "finite", "states": [1, 2], "signals": [0, 1], "matrix": [[0.7, 0.4], [0.3, 0.5]]}},
    {**NORMAL, "surprise": 1},
    {**NORMAL, "options": {"horizn": 10}},
    {"model": {"kind": "location", "family": "cauchy", "state_window": [1, 3]}},
    {**NORMAL, "prior": [1, 0]},
])
def test_invalid_configs_exit_2(tmp_path, bad):
    assert main(["check", "--config", write(tmp_path, bad)]) == 2


def test_usage_errors(tmp_path):
    cfg = write(tmp_path, NORMAL)
    assert main(["simulate", "--config", cfg, "--horizon", "0", "--out", str(tmp_path)]) == 2
    assert main(["experiment", "g42"]) == 2
    assert main(["scan", "--config", write(tmp_path, {"model": NORMAL["model"]}, "m.json")]) == 2
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2


def test_simulate_is_reproducible(tmp_path):
    cfg = write(tmp_path, FINITE)
    for d in ("a", "b"):
        assert main(["simulate", "--config", cfg, "--horizon", "40", "--runs", "2", "--seed", "3",
                     "--out", str(tmp_path / d)]) == 0
    for f in ("run_0.csv", "run_1.csv", "simulate.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    assert sorted(f.name for f in (tmp_path / "a").iterdir()) == ["run_0.csv", "run_1.csv", "simulate.json"]


def test_scan(tmp_path):
    cfg = write(tmp_path, {**NORMAL, "options": {"grid_step": 0.25}})
    assert main(["scan", "--config", cfg, "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "scan.json").read_text())
    assert doc["hits"] == [] and doc["beliefs"] == 3 + 3 * 3 + 3


def test_experiment_and_listing(tmp_path, capsys):
    assert main(["experiment"]) == 0
    assert "g8" in capsys.readouterr().out
    assert main(["experiment", "g6", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "appendixB_mixture.json").exists()


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "ordlearn.cli", "gallery-list"], capture_output=True, text=True)
    assert r.returncode == 0 and "prop2_fullsupport" in r.stdout
