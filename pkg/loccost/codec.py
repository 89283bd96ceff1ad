"""JSON matrix/state files.

Format: {"dims": [d1, ...], "entries": [[re, im], ...]} with row-major
matrix order. A file with prod(dims) entries is a state vector, one with
prod(dims)**2 entries is a square matrix.
"""
import json
import math
from pathlib import Path

import numpy as np
from pydantic import BaseModel, ValidationError, field_validator

from .errors import MatrixFileError


class MatrixFile(BaseModel):
    dims: list[int]
    entries: list[tuple[float, float]]

    @field_validator("dims")
    @classmethod
    def _positive_dims(cls, dims: list[int]) -> list[int]:
        if not dims or any(d < 1 for d in dims):
            raise ValueError("dims must be a non-empty list of positive integers")
        return dims

    @field_validator("entries")
    @classmethod
    def _finite_entries(cls, entries: list[tuple[float, float]]) -> list[tuple[float, float]]:
        for k, (re, im) in enumerate(entries):
            if not (math.isfinite(re) and math.isfinite(im)):
                raise ValueError(f"entry {k} is not finite")
        return entries

    @property
    def total_dim(self) -> int:
        return math.prod(self.dims)

    def to_array(self) -> np.ndarray:
        values = np.array([complex(re, im) for re, im in self.entries], dtype=complex)
        d = self.total_dim
        if values.size == d * d:
            return values.reshape(d, d)
        if values.size == d:
            return values
        raise ValueError(f"{values.size} entries fit neither a vector ({d}) nor a matrix ({d * d})")


def _reject_constant(token: str):
    raise ValueError(f"non-finite number {token} in matrix file")


def parse_matrix(text: str, source: str = "<string>") -> tuple[list[int], np.ndarray]:
    """Parse matrix-file text into (dims, vector or matrix)."""
    try:
        raw = json.loads(text, parse_constant=_reject_constant)
        model = MatrixFile.model_validate(raw)
        return model.dims, model.to_array()
    except json.JSONDecodeError as e:
        raise MatrixFileError(f"{source}: invalid JSON at line {e.lineno} column {e.colno}: {e.msg}") from e
    except ValidationError as e:
        problems = "; ".join(f"{'.'.join(map(str, err['loc']))}: {err['msg']}" for err in e.errors())
        raise MatrixFileError(f"{source}: {problems}") from e
    except ValueError as e:
        raise MatrixFileError(f"{source}: {e}") from e


def load_matrix(path: Path | str) -> tuple[list[int], np.ndarray]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise MatrixFileError(f"cannot read {path}: {e.strerror}") from e
    return parse_matrix(text, source=str(path))


def dump_matrix(dims: list[int], values: np.ndarray) -> str:
    flat = np.asarray(values, dtype=complex).reshape(-1)
    model = MatrixFile(dims=list(dims), entries=[(float(z.real), float(z.imag)) for z in flat])
    model.to_array()
    return model.model_dump_json()
