"""Shared pytest fixtures for loccost tests.

Loads .env from the project root BEFORE importing loccost modules.
"""
import os
import pytest
from pathlib import Path
from dotenv import load_dotenv

import numpy as np

# Load .env from project root BEFORE any loccost imports
PROJECT_ROOT = Path(__file__).parent.parent
load_dotenv(PROJECT_ROOT / ".env")

QUBIT_INPUT = (("A", 2), ("B", 2))


@pytest.fixture(scope="session")
def project_root():
    """Return the project root directory."""
    return PROJECT_ROOT


@pytest.fixture
def rng():
    """Fixed-seed generator so numeric tests are reproducible."""
    return np.random.default_rng(1234)


@pytest.fixture
def random_psi(rng):
    """Factory for Haar-random two-qubit inputs on registers A, B."""
    from loccost.tensor import random_pure_state

    def make(registers=QUBIT_INPUT):
        return random_pure_state(registers, rng)
    return make


@pytest.fixture
def test_db(tmp_path, monkeypatch):
    """Isolated run store.

    Points LOCCOST_DB at a temporary file and initializes the schema.
    """
    db_path = tmp_path / "runs.db"
    monkeypatch.setenv("LOCCOST_DB", str(db_path))

    from loccost.db import init_db
    init_db()

    yield db_path


@pytest.fixture
def db_connection(test_db):
    """Connection to the test run store, closed after the test."""
    from loccost.db import get_connection
    conn = get_connection()
    yield conn
    conn.close()


# Markers for test categories
def pytest_configure(config):
    """Register custom markers."""
    config.addinivalue_line(
        "markers", "slow: marks tests as slow (deselect with '-m not slow')"
    )
