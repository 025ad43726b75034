"""
Run registry: all SQL for runs.db.
Single source of truth for runs, stage timings and emitted artifacts; the CLI only calls these functions.
"""
import json
import os
import sqlite3
import time
from contextlib import contextmanager
from typing import Any, Dict, List, Optional

from database_setup import DB_PATH, init_db
from formats import dumps

TOOL_VERSION = "0.1.0"


def _conn(db_path: Optional[str] = None):
    path = db_path or DB_PATH
    if not os.path.exists(path):
        init_db(path)
    c = sqlite3.connect(path)
    c.row_factory = sqlite3.Row
    return c


def _loads(text):
    return json.loads(text) if text else None


# ---- Runs ----

def start_run(command: str, input_digest: Optional[str], config: Optional[dict] = None,
              seeds: Optional[dict] = None, db_path: Optional[str] = None) -> int:
    """Insert a run in state 'running' and return its id."""
    conn = _conn(db_path)
    try:
        cur = conn.execute(
            """
            INSERT INTO runs (command, input_digest, tool_version, config, seeds, status)
            VALUES (?, ?, ?, ?, ?, 'running')
            """,
            (command, input_digest, TOOL_VERSION, dumps(config or {}), dumps(seeds or {})),
        )
        conn.commit()
        return int(cur.lastrowid)
    finally:
        conn.close()


def set_config(run_id: int, config: dict, db_path: Optional[str] = None) -> None:
    """Replace the config snapshot once the command has adapted its settings."""
    conn = _conn(db_path)
    try:
        conn.execute("UPDATE runs SET config = ? WHERE id = ?", (dumps(config), run_id))
        conn.commit()
    finally:
        conn.close()


def set_base_points(run_id: int, base_points: List[Any], db_path: Optional[str] = None) -> None:
    conn = _conn(db_path)
    try:
        conn.execute("UPDATE runs SET base_points = ? WHERE id = ?", (dumps(base_points), run_id))
        conn.commit()
    finally:
        conn.close()


def finish_run(run_id: int, exit_code: int, db_path: Optional[str] = None) -> None:
    status = "ok" if exit_code == 0 else "failed"
    conn = _conn(db_path)
    try:
        conn.execute(
            "UPDATE runs SET status = ?, exit_code = ?, finished_at = CURRENT_TIMESTAMP WHERE id = ?",
            (status, exit_code, run_id),
        )
        conn.commit()
    finally:
        conn.close()


def get_run(run_id: int, db_path: Optional[str] = None) -> Optional[Dict[str, Any]]:
    """Return one run row as dict (JSON columns decoded) or None."""
    conn = _conn(db_path)
    try:
        row = conn.execute("SELECT * FROM runs WHERE id = ?", (run_id,)).fetchone()
    finally:
        conn.close()
    if row is None:
        return None
    run = dict(row)
    for key in ("config", "seeds", "base_points"):
        run[key] = _loads(run[key])
    return run


def list_runs(limit: int = 20, db_path: Optional[str] = None) -> List[Dict[str, Any]]:
    conn = _conn(db_path)
    try:
        rows = conn.execute(
            "SELECT id, command, status, exit_code, started_at FROM runs ORDER BY id DESC LIMIT ?",
            (limit,),
        ).fetchall()
        return [dict(r) for r in rows]
    finally:
        conn.close()


# ---- Stages ----

def record_stage(run_id: int, name: str, seconds: float, db_path: Optional[str] = None) -> None:
    conn = _conn(db_path)
    try:
        conn.execute("INSERT INTO stages (run_id, name, seconds) VALUES (?, ?, ?)", (run_id, name, float(seconds)))
        conn.commit()
    finally:
        conn.close()


@contextmanager
def timed_stage(run_id: Optional[int], name: str, db_path: Optional[str] = None):
    """Record the wall-clock time of the enclosed block; no-op without a run id."""
    start = time.perf_counter()
    try:
        yield
    finally:
        if run_id is not None:
            record_stage(run_id, name, time.perf_counter() - start, db_path)


def get_stages(run_id: int, db_path: Optional[str] = None) -> List[Dict[str, Any]]:
    conn = _conn(db_path)
    try:
        rows = conn.execute("SELECT name, seconds FROM stages WHERE run_id = ? ORDER BY id", (run_id,)).fetchall()
        return [dict(r) for r in rows]
    finally:
        conn.close()


# ---- Artifacts ----

def record_artifact(run_id: int, kind: str, path: str, digest: Optional[str] = None,
                    db_path: Optional[str] = None) -> None:
    conn = _conn(db_path)
    try:
        conn.execute(
            "INSERT INTO artifacts (run_id, kind, path, digest) VALUES (?, ?, ?, ?)",
            (run_id, kind, path, digest),
        )
        conn.commit()
    finally:
        conn.close()


def get_artifacts(run_id: int, db_path: Optional[str] = None) -> List[Dict[str, Any]]:
    conn = _conn(db_path)
    try:
        rows = conn.execute(
            "SELECT kind, path, digest FROM artifacts WHERE run_id = ? ORDER BY id", (run_id,)
        ).fetchall()
        return [dict(r) for r in rows]
    finally:
        conn.close()


# ---- Manifest ----

def build_manifest(run_id: int, contours: Optional[List[Any]] = None, db_path: Optional[str] = None) -> dict:
    """
    RunManifest document for a stored run

    Args:
        run_id (int): Run identifier
        contours (list, optional): contour serializations supplied by the command
        db_path (str, optional): registry path

    Returns:
        dict: digest, version, config snapshot, seeds, base points, tolerances, stage timings, artifacts
    """
    run = get_run(run_id, db_path)
    if run is None:
        raise KeyError(f"no run {run_id}")
    config = run["config"] or {}
    return {
        "run_id": run_id,
        "command": run["command"],
        "input_digest": run["input_digest"],
        "tool_version": run["tool_version"],
        "config": config,
        "seeds": run["seeds"] or {},
        "base_points": run["base_points"] or [],
        "tolerances": {k: v for k, v in config.items() if "tolerance" in k or k.endswith("agreement")},
        "stages": get_stages(run_id, db_path),
        "artifacts": get_artifacts(run_id, db_path),
        "contours": contours or [],
        "status": run["status"],
        "exit_code": run["exit_code"],
    }
