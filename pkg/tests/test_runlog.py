"""Tests for run recording."""
import pytest

from loccost.runlog import log_run, recent_runs, run_stats


@pytest.fixture(autouse=True)
def setup_db(test_db):
    """Fresh run store for each test."""
    yield test_db


def test_log_run_returns_id():
    """Each insert returns a new row id."""
    first = log_run("cost", {"command": "cost"}, 1, "v0.1.0", 0)
    second = log_run("cost", {"command": "cost"}, 1, "v0.1.0", 0)
    assert first is not None
    assert second == first + 1


@pytest.mark.parametrize("exit_code,status", [(0, "ok"), (2, "user_error"), (1, "internal_error")])
def test_status_from_exit_code(exit_code, status):
    """Exit codes map to ok, user_error and internal_error."""
    log_run("protocol", None, None, "unknown", exit_code)
    assert recent_runs(1)[0]["status"] == status


def test_summary_round_trip():
    """Summaries come back as dicts; missing ones as empty dicts."""
    log_run("markov", {}, 5, "v0.1.0", 0, {"markov_cost_bits": 1.0}, 12)
    log_run("markov", {}, 5, "v0.1.0", 2)
    latest, earlier = recent_runs()
    assert latest["summary"] == {}
    assert earlier["summary"] == {"markov_cost_bits": 1.0}
    assert earlier["duration_ms"] == 12


def test_recent_runs_limit():
    """Newest first, capped by limit."""
    for cmd in ("cost", "nshot", "typicality"):
        log_run(cmd, {}, 0, "v0.1.0", 0)
    assert [r["command"] for r in recent_runs(2)] == ["typicality", "nshot"]


def test_stats():
    """Counts per command and status."""
    log_run("cost", {}, 0, "v0.1.0", 0)
    log_run("cost", {}, 0, "v0.1.0", 2)
    log_run("fullmn", {}, 0, "v0.1.0", 0)
    stats = run_stats()
    assert stats["total"] == 3
    assert stats["by_command"] == {"cost": 2, "fullmn": 1}
    assert stats["by_status"] == {"ok": 2, "user_error": 1}


def test_unwritable_store_does_not_raise(tmp_path, monkeypatch):
    """Recording failures are swallowed."""
    blocker = tmp_path / "file"
    blocker.write_text("not a directory")
    monkeypatch.setenv("LOCCOST_DB", str(blocker / "runs.db"))
    assert log_run("cost", {}, 0, "v0.1.0", 0) is None
