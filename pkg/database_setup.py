"""
Run registry setup.
Initializes runs.db from schema.sql.
"""
import logging
import os
import sqlite3
from typing import Optional

logger = logging.getLogger(__name__)

DB_PATH = os.path.join(os.path.dirname(__file__), "runs.db")
SCHEMA_PATH = os.path.join(os.path.dirname(__file__), "schema.sql")


def init_db(db_path: Optional[str] = None) -> str:
    """Create the registry tables if missing; returns the database path."""
    path = db_path or DB_PATH
    with open(SCHEMA_PATH, "r", encoding="utf-8") as f:
        schema_sql = f.read()
    conn = sqlite3.connect(path)
    try:
        conn.executescript(schema_sql)
        conn.commit()
    finally:
        conn.close()
    logger.info("run registry initialized: %s", path)
    return path


if __name__ == "__main__":
    import argparse
    parser = argparse.ArgumentParser(description="Initialize the run registry database")
    parser.add_argument("--db", default=DB_PATH, help="Path to runs.db")
    args = parser.parse_args()

    print(f"Database initialized: {init_db(args.db)}")
