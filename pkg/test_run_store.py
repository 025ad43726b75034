"""
Run registry tests: schema, database_setup, run_store.
Run from project root:
  pytest test_run_store.py
"""
import os
import sqlite3
import sys

PROJECT_ROOT = os.path.dirname(os.path.abspath(__file__))
sys.path.insert(0, PROJECT_ROOT)

import pytest

import run_store
from database_setup import init_db


@pytest.fixture
def db(tmp_path):
    return str(tmp_path / "runs.db")


def test_init_db_creates_tables(db):
    assert init_db(db) == db
    conn = sqlite3.connect(db)
    try:
        names = {r[0] for r in conn.execute("SELECT name FROM sqlite_master WHERE type = 'table'")}
    finally:
        conn.close()
    assert {"runs", "stages", "artifacts"} <= names
    # idempotent
    init_db(db)


def test_run_lifecycle(db):
    run_id = run_store.start_run("solve", "abc123", {"gauss_order": 24}, {"basepoint_seed": 7}, db_path=db)
    run = run_store.get_run(run_id, db)
    assert run["status"] == "running"
    assert run["config"] == {"gauss_order": 24}
    assert run["seeds"] == {"basepoint_seed": 7}
    assert run["base_points"] is None

    run_store.set_config(run_id, {"gauss_order": 48}, db)
    run_store.set_base_points(run_id, [0.5 + 0.25j], db)
    run_store.finish_run(run_id, 0, db)
    run = run_store.get_run(run_id, db)
    assert run["status"] == "ok"
    assert run["exit_code"] == 0
    assert run["config"] == {"gauss_order": 48}
    assert run["base_points"] == [{"re": 0.5, "im": 0.25}]
    assert run["finished_at"] is not None


def test_failed_run_status(db):
    run_id = run_store.start_run("mm1", None, db_path=db)
    run_store.finish_run(run_id, 2, db)
    assert run_store.get_run(run_id, db)["status"] == "failed"
    assert run_store.get_run(run_id + 100, db) is None


def test_list_runs_newest_first(db):
    ids = [run_store.start_run(cmd, None, db_path=db) for cmd in ("polygon", "solve", "check")]
    runs = run_store.list_runs(db_path=db)
    assert [r["id"] for r in runs] == ids[::-1]
    assert len(run_store.list_runs(limit=2, db_path=db)) == 2


def test_timed_stage_records_duration(db):
    run_id = run_store.start_run("solve", None, db_path=db)
    with run_store.timed_stage(run_id, "critical_set", db):
        pass
    with pytest.raises(ValueError):
        with run_store.timed_stage(run_id, "newton", db):
            raise ValueError("boom")
    stages = run_store.get_stages(run_id, db)
    assert [s["name"] for s in stages] == ["critical_set", "newton"]
    assert all(s["seconds"] >= 0 for s in stages)


def test_timed_stage_without_run_is_noop(db):
    with run_store.timed_stage(None, "anything", db):
        pass
    assert not os.path.exists(db)


def test_manifest(db):
    config = {"trace_tolerance": 1e-10, "stokes_agreement": 1e-6, "gauss_order": 24}
    run_id = run_store.start_run("solve", "feed", config, {"basepoint_seed": 1}, db_path=db)
    run_store.record_stage(run_id, "solve", 1.5, db)
    run_store.record_artifact(run_id, "result", "out.json", "d1", db)
    run_store.finish_run(run_id, 0, db)

    manifest = run_store.build_manifest(run_id, [{"name": "a_0"}], db)
    assert manifest["command"] == "solve"
    assert manifest["input_digest"] == "feed"
    assert manifest["tool_version"] == run_store.TOOL_VERSION
    assert manifest["tolerances"] == {"trace_tolerance": 1e-10, "stokes_agreement": 1e-6}
    assert manifest["stages"] == [{"name": "solve", "seconds": 1.5}]
    assert manifest["artifacts"] == [{"kind": "result", "path": "out.json", "digest": "d1"}]
    assert manifest["contours"] == [{"name": "a_0"}]
    assert manifest["status"] == "ok"

    with pytest.raises(KeyError):
        run_store.build_manifest(run_id + 1, db_path=db)
