"""Deterministic result files: CSV with hash-carrying headers, canonical JSON.

Every output is a pure function of (config, seed): floats are serialized at full
precision via repr, keys are sorted, and no timestamps or environment details
are written. Each file carries the experiment's config hash in a header comment
so a result can be matched to the exact configuration that produced it.
"""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np

from .core import InvalidInputError

__all__ = [
    "config_hash",
    "read_table",
    "write_json",
    "write_table",
]


def _canonical(value):
    """Reduce a value to plain JSON-serializable types with stable ordering."""
    if isinstance(value, dict):
        return {str(k): _canonical(v) for k, v in sorted(value.items())}
    if isinstance(value, (list, tuple)):
        return [_canonical(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_canonical(v) for v in value.tolist()]
    if isinstance(value, (np.floating, float)):
        return float(value)
    if isinstance(value, (np.integer, int)):
        return int(value)
    if value is None or isinstance(value, (str, bool)):
        return value
    raise InvalidInputError(f"cannot serialize value of type {type(value).__name__}")


def config_hash(payload: dict) -> str:
    """Stable short hash of a configuration mapping."""
    text = json.dumps(_canonical(payload), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def _format_cell(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_table(path, header: list[str], rows, meta: dict | None = None) -> None:
    """Write a CSV table; ``meta`` entries become ``# key: value`` header comments."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        for key in sorted(meta or {}):
            fh.write(f"# {key}: {meta[key]}\n")
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_format_cell(v) for v in row])


def read_table(path):
    """Read a CSV written by :func:`write_table`.

    Returns (meta, header, rows) where rows is a float array when every cell
    parses as a number, otherwise a list of string lists.
    """
    meta: dict[str, str] = {}
    with open(path, newline="") as fh:
        lines = []
        for line in fh:
            if line.startswith("#"):
                body = line[1:].strip()
                key, _, value = body.partition(":")
                meta[key.strip()] = value.strip()
            else:
                lines.append(line)
    reader = csv.reader(lines)
    try:
        header = next(reader)
    except StopIteration:
        raise InvalidInputError(f"{path}: no header row") from None
    raw = [row for row in reader if row]
    try:
        rows = np.array([[float(v) for v in row] for row in raw])
    except ValueError:
        rows = [list(row) for row in raw]
    return meta, header, rows


def write_json(path, payload: dict) -> None:
    """Write a canonical JSON document: sorted keys, repr-precision floats."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(_canonical(payload), fh, sort_keys=True, indent=2)
        fh.write("\n")
