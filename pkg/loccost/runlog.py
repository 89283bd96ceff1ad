"""Record CLI runs in the run store."""
import json
import logging

from .db import get_connection, init_db

logger = logging.getLogger(__name__)


def log_run(command: str, config: dict | None, seed: int | None, version: str,
            exit_code: int, summary: dict | None = None, duration_ms: int | None = None) -> int | None:
    """Insert one run row. Never raises; returns the row id or None."""
    status = {0: "ok", 2: "user_error"}.get(exit_code, "internal_error")
    try:
        init_db()
        conn = get_connection()
        try:
            cursor = conn.execute(
                """INSERT INTO runs (command, config, seed, version, status, exit_code, summary, duration_ms)
                   VALUES (?, ?, ?, ?, ?, ?, ?, ?)""",
                (
                    command,
                    json.dumps(config, sort_keys=True, default=str) if config is not None else None,
                    seed,
                    version,
                    status,
                    exit_code,
                    json.dumps(summary, sort_keys=True, default=str) if summary is not None else None,
                    duration_ms,
                ),
            )
            conn.commit()
            return cursor.lastrowid
        finally:
            conn.close()
    except Exception as e:  # the run store must not fail a command
        logger.debug("could not record run: %s", e)
        return None


def recent_runs(limit: int = 20) -> list[dict]:
    init_db()
    conn = get_connection()
    try:
        rows = conn.execute(
            "SELECT id, command, seed, version, status, exit_code, summary, duration_ms, started_at "
            "FROM runs ORDER BY id DESC LIMIT ?",
            (limit,),
        ).fetchall()
    finally:
        conn.close()
    runs = []
    for row in rows:
        entry = dict(row)
        entry["summary"] = json.loads(entry["summary"]) if entry["summary"] else {}
        runs.append(entry)
    return runs


def run_stats() -> dict:
    """Counts per command and per status."""
    init_db()
    conn = get_connection()
    try:
        by_command = {r["command"]: r["n"] for r in conn.execute(
            "SELECT command, COUNT(*) AS n FROM runs GROUP BY command ORDER BY command")}
        by_status = {r["status"]: r["n"] for r in conn.execute(
            "SELECT status, COUNT(*) AS n FROM runs GROUP BY status ORDER BY status")}
    finally:
        conn.close()
    return {"total": sum(by_command.values()), "by_command": by_command, "by_status": by_status}
