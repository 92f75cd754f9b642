"""CSV and JSON writers with round-trippable floats and stable layout."""
from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

SCHEMA_VERSION = 1


def _cell(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(x)


def emit_csv(series: dict, path) -> Path:
    """Write equal-length columns in insertion order under a single header row.

    Floats are written with ``repr`` so they parse back bit-identically;
    ``None`` becomes an empty cell.
    """
    columns = list(series)
    data = [list(series[c]) for c in columns]
    n = {len(col) for col in data}
    if len(n) > 1:
        raise ValueError(f"columns have different lengths: {sorted(n)}")
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(columns) + "\n")
        for row in zip(*data):
            fh.write(",".join(_cell(x) for x in row) + "\n")
    return path


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    return obj


def emit_json(summary: dict, path) -> Path:
    """Write ``summary`` with a ``schema_version`` field, keys sorted."""
    payload = {"schema_version": SCHEMA_VERSION, **_jsonable(summary)}
    path = Path(path)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def read_csv(path) -> dict:
    """Inverse of :func:`emit_csv` for numeric columns (empty cells -> nan)."""
    with Path(path).open(encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split(",")
        rows = [line.rstrip("\n").split(",") for line in fh if line.strip()]
    return {name: np.array([float(r[i]) if r[i] else np.nan for r in rows])
            for i, name in enumerate(header)}
