import csv
import json

import numpy as np
import pytest

from oracles import p1_eigenvalue, theta_amplification
from hybridpar.cli import DEFAULT_CONFIG, load_config, main

SMALL = {"mesh": {"n_nodes": 21}, "time": {"n_steps": 20}}
HEAT = {"problem": {"name": "heat", "params": {"nu": 1.0, "T": 0.1}},
        "mesh": {"n_nodes": 21}, "time": {"n_steps": 16}, "initial": {"tau0": 0.05},
        "output": {"state_every": 1}}


def write_config(tmp_path, doc, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


def run(tmp_path, command, doc, out="out", extra=()):
    cfg = write_config(tmp_path, doc)
    return main([command, "--config", cfg, "--out", str(tmp_path / out), *extra])


def read_rows(path):
    with open(path) as fh:
        return list(csv.DictReader(line for line in fh if not line.startswith("#")))


def test_print_config_reports_defaults(capsys):
    assert main(["print-config"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc == DEFAULT_CONFIG
    assert doc["mesh"]["n_nodes"] == 1001 and doc["time"]["n_steps"] == 1000


@pytest.mark.parametrize("doc", [
    {"time": {"n_steps": 41}},
    {"mesh": {"n_nodes": 2}},
    {"scheme": {"state": "RK4"}},
    {"initial": {"tau0": 30.0}},
    {"optimizer": {"backtrack": 2.0}},
    {"problem": {"name": "nope"}},
    {"problem": {"params": {"kappa": 1.0}}},
    {"mystery": 1},
])
def test_config_errors_exit_2(tmp_path, doc, capsys):
    assert run(tmp_path, "solve", doc) == 2
    assert "config error" in capsys.readouterr().err


def test_unreadable_config_exits_2(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["solve", "--config", str(bad)]) == 2
    assert main(["solve", "--config", str(tmp_path / "missing.json")]) == 2


def test_error_message_names_field(tmp_path):
    with pytest.raises(ValueError, match="time.n_steps"):
        load_config(write_config(tmp_path, {"time": {"n_steps": 7}}))


def test_solver_failure_exits_3(tmp_path):
    doc = {**SMALL, "initial": {"u0": {"kind": "constant", "value": 5.0}}}
    assert run(tmp_path, "solve", doc) == 3


def test_heat_state_matches_discrete_mode(tmp_path):
    assert run(tmp_path, "solve", HEAT) == 0
    rows = read_rows(tmp_path / "out" / "state.csv")
    final = np.array([float(r["value"]) for r in rows if float(r["s"]) == 2.0])
    x = np.linspace(0.0, 1.0, 21)
    g = theta_amplification(p1_eigenvalue(1, 0.05), 0.1 / 16, 0.5)
    np.testing.assert_allclose(final, g ** 16 * np.sin(np.pi * x), atol=1e-13)
    cost = json.loads((tmp_path / "out" / "cost.json").read_text())
    assert cost["J"] == 0.0
    assert len(cost["header"]["config_hash"]) == 16


def test_optimize_and_diagnose(tmp_path):
    doc = {**SMALL, "optimizer": {"max_iters": 5}}
    assert run(tmp_path, "optimize", doc) == 0
    out = tmp_path / "out"
    report = json.loads((out / "report.json").read_text())
    its = read_rows(out / "iterations.csv")
    assert len(its) == report["iterations"] + 1
    assert float(its[-1]["tau"]) == report["tau_star"]
    assert report["J_star"] <= float(its[0]["J"])
    assert report["improvement_percent"] == pytest.approx(
        100 * (report["J_baseline"] - report["J_star"]) / abs(report["J_baseline"]))
    assert run(tmp_path, "diagnose", doc) == 0
    for name in ("pontryagin.json", "hamiltonian.csv", "fd_audit.json", "second_order.json"):
        assert (out / name).exists()
    pont = json.loads((out / "pontryagin.json").read_text())
    assert pont["tau"] == report["tau_star"]


def test_reports_are_byte_identical(tmp_path):
    doc = {**SMALL, "optimizer": {"max_iters": 3}}
    assert run(tmp_path, "optimize", doc, out="a") == 0
    assert run(tmp_path, "optimize", doc, out="b") == 0
    for name in ("report.json", "iterations.csv", "final_control.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_warm_start_from_file(tmp_path):
    doc = {**SMALL, "optimizer": {"max_iters": 2}}
    assert run(tmp_path, "optimize", doc) == 0
    warm = {**doc, "initial": {"u0": {"kind": "file", "path": "out/final_control.csv"},
                               "tau0": 15.0}}
    assert run(tmp_path, "solve", warm, out="warm") == 0


def test_missing_artifacts_exit_4(tmp_path):
    assert run(tmp_path, "diagnose", SMALL, out="empty") == 4


def test_corrupt_artifacts_exit_4(tmp_path):
    doc = {**SMALL, "optimizer": {"max_iters": 1}}
    assert run(tmp_path, "optimize", doc) == 0
    ctrl = tmp_path / "out" / "final_control.csv"
    lines = ctrl.read_text().splitlines()
    ctrl.write_text("\n".join(lines[:-5]) + "\n")
    assert run(tmp_path, "diagnose", doc) == 4
    assert run(tmp_path, "optimize", doc) == 0
    (tmp_path / "out" / "report.json").write_text("{\"tau_star\": \"x\"}")
    assert run(tmp_path, "diagnose", doc) == 4


def test_sweep_reports_error_rows(tmp_path):
    doc = {**SMALL, "sweep": {"tau_grid": [-1.0, 12.0, 15.0], "reoptimize": False}}
    assert run(tmp_path, "sweep-tau", doc) == 0
    rows = read_rows(tmp_path / "out" / "sweep.csv")
    assert [r["status"] for r in rows] == ["error", "ok", "ok"]
    assert list(rows[0]) == ["tau", "J", "status", "iterations", "termination", "message"]
    assert np.isnan(float(rows[0]["J"]))


def test_sweep_parallel_matches_serial(tmp_path):
    doc = {**SMALL, "sweep": {"tau_grid": [12.0, 15.0], "reoptimize": True},
           "optimizer": {"max_iters": 2}}
    assert run(tmp_path, "sweep-tau", doc, out="serial") == 0
    assert run(tmp_path, "sweep-tau", doc, out="par", extra=("--jobs", "2")) == 0
    assert ((tmp_path / "serial" / "sweep.csv").read_bytes()
            == (tmp_path / "par" / "sweep.csv").read_bytes())


def test_autonomous_hamiltonian_has_zero_xi(tmp_path):
    doc = {**SMALL, "optimizer": {"max_iters": 1},
           "diagnostics": {"autonomous": True, "fd_dirs": 2, "second_order_dirs": 1,
                           "fd_eps_sweep": []}}
    assert run(tmp_path, "optimize", doc) == 0
    assert run(tmp_path, "diagnose", doc) == 0
    rows = read_rows(tmp_path / "out" / "hamiltonian.csv")
    assert len(rows) == 20
    assert all(float(r["xi"]) == 0.0 for r in rows)
