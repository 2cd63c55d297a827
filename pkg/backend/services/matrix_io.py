# backend/services/matrix_io.py

"""
Matrix file format shared by the CLI and the HTTP routes.

JSON: {"field": "real"|"complex", "n": int, "rows": [[entry, ...], ...]}
      a real entry is a number, a complex entry is [re, im].
CSV:  a plain numeric grid, real matrices only.

Floats are written with Python's shortest round-trip repr, so
write_matrix followed by read_matrix returns bit-identical entries.
"""

import json
import logging
from pathlib import Path

import numpy as np
import pandas as pd

from errors import MatrixParseError, PermBoundError
from services.linalg_service import Field, Matrix

log = logging.getLogger(__name__)


def _entry(value, field):
    try:
        return _convert(value, field)
    except OverflowError:
        raise MatrixParseError(f"entry {value!r} does not fit a 64-bit float")


def _convert(value, field):
    if field is Field.REAL:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise MatrixParseError(f"real entry must be a number, got {value!r}")
        return float(value)
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return complex(value)
    if isinstance(value, (list, tuple)) and len(value) == 2 and \
            all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value):
        return complex(value[0], value[1])
    raise MatrixParseError(f"complex entry must be [re, im], got {value!r}")


def matrix_from_payload(obj) -> Matrix:
    if not isinstance(obj, dict):
        raise MatrixParseError("matrix payload must be a JSON object")
    try:
        field = Field(obj.get("field", "real"))
    except ValueError:
        raise MatrixParseError(f"unknown field {obj.get('field')!r}")
    rows = obj.get("rows")
    if not isinstance(rows, list) or not rows:
        raise MatrixParseError("'rows' must be a non-empty list")
    n = len(rows)
    declared = obj.get("n", n)
    if declared != n:
        raise MatrixParseError(f"declared n={declared} but found {n} rows")
    for i, row in enumerate(rows):
        if not isinstance(row, list) or len(row) != n:
            raise MatrixParseError(f"row {i} must have exactly {n} entries")
    data = [[_entry(v, field) for v in row] for row in rows]
    try:
        return Matrix.from_array(np.array(data), field)
    except PermBoundError as e:
        raise MatrixParseError(str(e))


def matrix_to_payload(A: Matrix) -> dict:
    if A.is_real:
        rows = [[float(v) for v in row] for row in A.entries]
    else:
        rows = [[[float(v.real), float(v.imag)] for v in row] for row in A.entries]
    return {"field": A.field.value, "n": A.n, "rows": rows}


def read_matrix(path) -> Matrix:
    path = Path(path)
    if path.suffix.lower() == ".csv":
        try:
            grid = pd.read_csv(path, header=None, dtype=np.float64,
                               float_precision="round_trip").to_numpy()
        except (OSError, ValueError) as e:
            raise MatrixParseError(f"cannot read {path}: {e}")
        try:
            return Matrix.from_array(grid)
        except PermBoundError as e:
            raise MatrixParseError(f"{path}: {e}")
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as e:
        raise MatrixParseError(f"cannot read {path}: {e}")
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as e:
        raise MatrixParseError(f"{path}: invalid JSON ({e})")
    A = matrix_from_payload(obj)
    log.debug("read %s matrix n=%d from %s", A.field.value, A.n, path)
    return A


def write_matrix(A: Matrix, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if path.suffix.lower() == ".csv":
        if not A.is_real:
            raise MatrixParseError("CSV format holds real matrices only")
        lines = [",".join(repr(float(v)) for v in row) for row in A.entries]
        path.write_text("\n".join(lines) + "\n")
    else:
        path.write_text(json.dumps(matrix_to_payload(A)) + "\n")
    return path
