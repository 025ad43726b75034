"""
Command-line tests: subcommands end to end, exit codes, JSON errors and the run registry.
Run from project root:
  pytest test_app.py
"""
import json
import os
import sys

PROJECT_ROOT = os.path.dirname(os.path.abspath(__file__))
sys.path.insert(0, PROJECT_ROOT)

import numpy as np
import pytest

import app
import run_store
from errors import MaxIterations
from formats import complex_from_json, validate


def _read(path):
    with open(path, encoding="utf-8") as f:
        return json.load(f)


def _xs(values):
    return np.array([complex_from_json(v) for v in values])


def _error(capsys):
    """The JSON error document, the last thing written to stderr."""
    err = capsys.readouterr().err
    start = 0 if err.startswith("{") else err.rindex("\n{") + 1
    return json.loads(err[start:])


@pytest.fixture
def db(tmp_path):
    return str(tmp_path / "runs.db")


@pytest.fixture(scope="module")
def mm1_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("mm1")
    paths = {name: str(root / name) for name in ("package.json", "g.json", "density.svg", "runs.db")}
    code = app.main(["mm1", "--potential", "0,0.5", "-o", paths["package.json"],
                     "--g-function", paths["g.json"], "--svg", paths["density.svg"], "--db", paths["runs.db"]])
    return code, paths


@pytest.fixture(scope="module")
def nodal_network_file(tmp_path_factory):
    root = tmp_path_factory.mktemp("network")
    curve = root / "curve.json"
    curve.write_text(json.dumps({"family": "degenerate_weierstrass", "u": 1.0}))
    out = str(root / "network.json")
    code = app.main(["network", "-i", str(curve), "-o", out, "--db", str(root / "runs.db")])
    return code, out


# ---- Curve commands ----

def test_polygon_to_stdout(db, capsys):
    assert app.main(["polygon", "--g2", "3", "--db", db]) == app.EXIT_OK
    report = json.loads(capsys.readouterr().out)
    assert report["interior"] == [[0, 0]]
    assert report["moduli_dimension"] == 1
    assert len(report["punctures"]) == 1


def test_solve_writes_trace_and_manifest(tmp_path, db):
    out, trace, manifest = (str(tmp_path / n) for n in ("result.json", "trace.jsonl", "manifest.json"))
    code = app.main(["solve", "--g2", "3", "-o", out, "--trace", trace, "--manifest", manifest, "--db", db])
    assert code == app.EXIT_OK
    result = _read(out)
    g3 = next(complex(t["re"], t["im"]) for t in result["polynomial"]["terms"] if (t["i"], t["j"]) == (0, 0))
    assert abs(g3 - 2.0) < 1e-6
    assert result["zeta_residual"] < 1e-8
    with open(trace, encoding="utf-8") as f:
        assert all(json.loads(line) for line in f if line.strip())

    doc = _read(manifest)
    validate(doc, "run_manifest")
    assert doc["command"] == "solve"
    assert doc["status"] == "ok"
    assert [s["name"] for s in doc["stages"]] == ["solve"]
    assert {a["kind"] for a in doc["artifacts"]} >= {"result", "trace"}
    assert len(doc["base_points"]) == 1
    assert "root_cluster_tolerance" in doc["tolerances"]


def test_config_overrides_are_recorded(tmp_path, db):
    config = tmp_path / "config.json"
    config.write_text(json.dumps({"gauss_order": 32, "no_such_setting": 1}))
    assert app.main(["polygon", "--g2", "3", "--config", str(config), "-o", str(tmp_path / "p.json"),
                     "--db", db]) == app.EXIT_OK
    (latest,) = run_store.list_runs(limit=1, db_path=db)
    run = run_store.get_run(latest["id"], db)
    assert run["config"]["gauss_order"] == 32
    assert "no_such_setting" not in run["config"]


def test_network_and_render(nodal_network_file, tmp_path, db):
    code, network = nodal_network_file
    assert code == app.EXIT_OK
    doc = _read(network)
    assert doc["kind"] == "first"
    assert len(doc["edges"]) == 14
    assert "polynomial" in doc

    svg = str(tmp_path / "network.svg")
    assert app.main(["render", "-i", network, "-o", svg, "--db", db]) == app.EXIT_OK
    with open(svg, encoding="utf-8") as f:
        assert f.read().count('id="edge-') == 14


# ---- Applications ----

def test_mm1_package(mm1_run):
    code, paths = mm1_run
    assert code == app.EXIT_OK
    doc = _read(paths["package.json"])
    (arc,) = doc["support"]
    xs = _xs(arc["points"])
    assert xs.real.min() == pytest.approx(-2.0, abs=1e-6)
    assert xs.real.max() == pytest.approx(2.0, abs=1e-6)
    assert doc["mass"] == pytest.approx(1.0, abs=1e-6)
    assert doc["energy"]["F_functional"] == pytest.approx(0.75, abs=1e-4)


def test_mm1_side_outputs(mm1_run):
    _, paths = mm1_run
    g = _read(paths["g.json"])
    validate(g, "g_function")
    with open(paths["density.svg"], encoding="utf-8") as f:
        assert 'id="density-0"' in f.read()
    (run,) = run_store.list_runs(db_path=paths["runs.db"])
    kinds = [a["kind"] for a in run_store.get_artifacts(run["id"], paths["runs.db"])]
    assert kinds == ["result", "g_function", "svg"]


def test_check_equilibrium_package(mm1_run, tmp_path, db):
    _, paths = mm1_run
    out = str(tmp_path / "report.json")
    code = app.main(["check", "-i", paths["package.json"], "--no-isolation", "-o", out, "--db", db])
    report = _read(out)
    assert report["kind"] == "equilibrium"
    assert code == (app.EXIT_OK if report["passed"] else app.EXIT_AUDIT)
    by_name = {c["check"]: c for c in report["checks"]}
    for name in ("residue_sum", "mass", "moments", "stieltjes", "energy"):
        assert by_name[name]["passed"], name


def test_check_fails_on_doctored_mass(mm1_run, tmp_path, db, capsys):
    _, paths = mm1_run
    doc = _read(paths["package.json"])
    doc["mass"] = 0.5
    doctored = tmp_path / "doctored.json"
    doctored.write_text(json.dumps(doc))
    assert app.main(["check", "-i", str(doctored), "--no-isolation", "-o", str(tmp_path / "r.json"),
                     "--db", db]) == app.EXIT_AUDIT
    error = _error(capsys)
    assert error["error"] == "AuditFailed"
    assert "mass" in error["details"]["checks"]


# ---- Errors ----

def test_missing_input_is_an_input_error(tmp_path, db, capsys):
    code = app.main(["polygon", "-i", str(tmp_path / "nope.json"), "--db", db])
    assert code == app.EXIT_INPUT
    assert _error(capsys)["error"] == "InputError"


def test_bad_potential_fails_the_run(db, capsys):
    assert app.main(["mm1", "--potential", "1", "--db", db]) == app.EXIT_INPUT
    assert _error(capsys)["error"] == "InputError"
    (run,) = run_store.list_runs(db_path=db)
    assert run["status"] == "failed"
    assert run["exit_code"] == app.EXIT_INPUT


def test_duplicate_strebel_points(db, capsys):
    assert app.main(["strebel", "--points", "0,1,1", "--db", db]) == app.EXIT_INPUT
    assert "distinct" in _error(capsys)["message"]


def test_numerical_failure_exit_code(monkeypatch, db, capsys):
    def fail(*args, **kwargs):
        raise MaxIterations("Newton iteration did not converge", iterations=60)

    monkeypatch.setattr(app, "solve", fail)
    assert app.main(["solve", "--g2", "3", "--db", db]) == app.EXIT_NUMERICAL
    error = _error(capsys)
    assert error == {"error": "MaxIterations", "message": "Newton iteration did not converge",
                     "details": {"iterations": 60}}
