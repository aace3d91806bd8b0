"""Readers for the dmdmpc on-disk formats.

DMDMAT01 files carry an 8-byte magic, two little-endian uint64 dimensions,
and row-major float64 payload.  metrics.csv files have a header row followed
by numeric rows.  run.json carries run metadata.  This module is deliberately
standalone: it must stay importable without the dmdmpc package installed.
"""

from __future__ import annotations

import csv
import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"DMDMAT01"
_HEADER = struct.Struct("<8sQQ")


def read_matrix(path) -> np.ndarray:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise ValueError(f"{path}: not a matrix file (truncated header)")
    magic, rows, cols = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ValueError(f"{path}: not a matrix file (bad magic {magic!r})")
    expected = _HEADER.size + 8 * rows * cols
    if len(raw) != expected:
        raise ValueError(f"{path}: corrupt ({len(raw)} bytes, expected {expected})")
    return np.frombuffer(raw, dtype="<f8", offset=_HEADER.size).reshape(rows, cols).copy()


def read_metrics(path):
    """metrics.csv -> dict of column name -> float array."""
    path = Path(path)
    with open(path) as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(v) for v in row] for row in reader if row]
    data = np.asarray(rows)
    if data.size == 0:
        raise ValueError(f"{path}: no data rows")
    return {name: data[:, i] for i, name in enumerate(header)}


def read_meta(run_dir) -> dict:
    path = Path(run_dir) / "run.json"
    if not path.exists():
        return {}
    return json.loads(path.read_text())


def require(run_dir, *names) -> list:
    """Resolve required files inside a run directory, listing what is missing."""
    run_dir = Path(run_dir)
    paths = [run_dir / name for name in names]
    missing = [str(p) for p in paths if not p.exists()]
    if missing:
        raise FileNotFoundError(
            f"{run_dir}: missing expected file(s): {', '.join(missing)}"
        )
    return paths


def field_stack(mat: np.ndarray) -> np.ndarray:
    """Column-stacked snapshots (w*w x k) -> (k, w, w) array of fields."""
    n, k = mat.shape
    w = int(round(np.sqrt(n)))
    if w * w != n:
        raise ValueError(f"snapshot length {n} is not a square field")
    return mat.reshape(w, w, k, order="F").transpose(2, 0, 1)


def run_label(run_dir) -> str:
    """Legend label from run metadata, falling back to the directory name."""
    meta = read_meta(run_dir)
    parts = []
    if "controller" in meta:
        parts.append(str(meta["controller"]))
    ref = meta.get("reference", {})
    if isinstance(ref, dict) and "kind" in ref:
        parts.append(str(ref["kind"]))
    if "sweep" in meta:
        parts.append(f"r={meta.get('r')} m={meta.get('m')}")
    return " ".join(parts) if parts else Path(run_dir).name
