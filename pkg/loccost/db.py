"""Shared database utilities for the run store."""
import os
import sqlite3
from pathlib import Path


def get_db_path() -> Path:
    """Get database path - project-local .loccost/runs.db or env override."""
    if env_path := os.environ.get("LOCCOST_DB"):
        return Path(env_path)

    # Look for .loccost/ in current directory or parents
    cwd = Path(os.getcwd())
    for parent in [cwd] + list(cwd.parents):
        candidate = parent / ".loccost" / "runs.db"
        if candidate.exists():
            return candidate
        # Stop at home directory
        if parent == Path.home():
            break

    return cwd / ".loccost" / "runs.db"


def get_connection(db_path: Path | None = None) -> sqlite3.Connection:
    path = db_path or get_db_path()
    conn = sqlite3.connect(str(path))
    conn.row_factory = sqlite3.Row
    return conn


def init_db(db_path: Path | None = None) -> Path:
    """Initialize database with base schema."""
    path = db_path or get_db_path()
    path.parent.mkdir(parents=True, exist_ok=True)
    conn = get_connection(path)

    conn.executescript("""
        -- Schema migrations tracking
        CREATE TABLE IF NOT EXISTS migrations (
            id INTEGER PRIMARY KEY,
            name TEXT NOT NULL UNIQUE,
            applied_at DATETIME DEFAULT CURRENT_TIMESTAMP
        );

        -- One row per CLI invocation
        CREATE TABLE IF NOT EXISTS runs (
            id INTEGER PRIMARY KEY,
            command TEXT NOT NULL,
            config TEXT,  -- JSON RunConfig
            seed INTEGER,
            version TEXT,
            status TEXT DEFAULT 'ok',  -- 'ok', 'user_error', 'internal_error'
            exit_code INTEGER DEFAULT 0,
            summary TEXT,  -- JSON object of headline numbers
            started_at DATETIME DEFAULT CURRENT_TIMESTAMP
        );

        CREATE INDEX IF NOT EXISTS idx_runs_command ON runs(command);
        CREATE INDEX IF NOT EXISTS idx_runs_started ON runs(started_at);
    """)
    conn.commit()

    _run_migrations(conn)
    conn.close()
    return path


def _run_migrations(conn: sqlite3.Connection) -> None:
    """Run pending migrations."""
    columns = {row[1] for row in conn.execute("PRAGMA table_info(runs)").fetchall()}
    applied = {row[0] for row in conn.execute("SELECT name FROM migrations").fetchall()}

    if "duration_ms" not in columns:
        conn.execute("ALTER TABLE runs ADD COLUMN duration_ms INTEGER")
    if "add_duration_ms" not in applied:
        conn.execute("INSERT INTO migrations (name) VALUES ('add_duration_ms')")

    conn.commit()
