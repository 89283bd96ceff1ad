"""Tests for JSON matrix files."""
import json

import numpy as np
import pytest

from loccost.codec import dump_matrix, load_matrix, parse_matrix
from loccost.errors import MatrixFileError, UserInputError


def test_parse_state_vector():
    """prod(dims) entries read as a vector."""
    dims, values = parse_matrix('{"dims": [2], "entries": [[0.6, 0], [0, 0.8]]}')
    assert dims == [2]
    np.testing.assert_allclose(values, [0.6, 0.8j])


def test_parse_square_matrix():
    """prod(dims)**2 entries read row-major as a matrix."""
    entries = [[1, 0], [0, 0], [0, 0], [-1, 0]]
    _, values = parse_matrix(json.dumps({"dims": [2], "entries": entries}))
    np.testing.assert_allclose(values, np.diag([1, -1]))


def test_wrong_entry_count():
    """Three entries fit neither shape for d=2."""
    with pytest.raises(MatrixFileError, match="neither"):
        parse_matrix('{"dims": [2], "entries": [[1, 0], [0, 0], [0, 0]]}')


def test_rejects_nan():
    """Non-finite numbers are refused before validation."""
    with pytest.raises(MatrixFileError, match="non-finite"):
        parse_matrix('{"dims": [1], "entries": [[NaN, 0]]}')


def test_rejects_bad_dims():
    """Dimensions must be positive."""
    with pytest.raises(MatrixFileError, match="dims"):
        parse_matrix('{"dims": [0], "entries": []}')


def test_invalid_json_names_source():
    """Syntax errors carry the source name and position."""
    with pytest.raises(MatrixFileError, match="gate.json: invalid JSON"):
        parse_matrix("{", source="gate.json")


def test_missing_file(tmp_path):
    """A missing file is a user input error."""
    with pytest.raises(UserInputError, match="cannot read"):
        load_matrix(tmp_path / "absent.json")


def test_dump_then_load(tmp_path):
    """A dumped gate loads back unchanged."""
    gate = np.diag([1, 1j, -1j, 1])
    path = tmp_path / "gate.json"
    path.write_text(dump_matrix([2, 2], gate))
    dims, values = load_matrix(path)
    assert dims == [2, 2]
    np.testing.assert_allclose(values, gate)
