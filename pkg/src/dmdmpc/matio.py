"""Matrix containers, snapshot datasets, and bit-exact binary persistence.

Matrices are plain 2-D float64 numpy arrays (row-major).  The on-disk format
is ``DMDMAT01``: an 8-byte magic string, two little-endian uint64 dimensions,
then rows*cols IEEE-754 binary64 little-endian values in row-major order.
Round-tripping through :func:`write_matrix` / :func:`read_matrix` is
bit-exact.  A CSV mirror (:func:`write_csv`) exists for plotting tools; the
binary format is authoritative.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAGIC = b"DMDMAT01"
_HEADER = struct.Struct("<8sQQ")

# alias used in signatures: a 2-D float64 ndarray
RealMatrix = np.ndarray


def as_matrix(data, name: str = "matrix") -> np.ndarray:
    """Coerce ``data`` to a C-contiguous 2-D float64 array with finite entries."""
    mat = np.ascontiguousarray(data, dtype=np.float64)
    if mat.ndim == 1:
        mat = mat.reshape(1, -1)
    if mat.ndim != 2:
        raise ValueError(f"{name}: expected a 2-D matrix, got ndim={mat.ndim}")
    if mat.size == 0:
        raise ValueError(f"{name}: empty matrix")
    if not np.isfinite(mat).all():
        raise ValueError(f"{name}: invalid data (NaN/Inf entries)")
    return mat


@dataclass(frozen=True)
class SnapshotDataset:
    """State and input snapshots sampled at a fixed interval ``dt``.

    Column k of ``states`` is the state observed at step k; column k of
    ``inputs`` is the input applied at step k (driving the transition to
    column k+1).
    """

    states: np.ndarray  # n x m
    inputs: np.ndarray  # q x m
    dt: float

    def __post_init__(self):
        object.__setattr__(self, "states", as_matrix(self.states, "states"))
        object.__setattr__(self, "inputs", as_matrix(self.inputs, "inputs"))
        if self.states.shape[1] != self.inputs.shape[1]:
            raise ValueError(
                "states and inputs must have the same number of snapshots, "
                f"got {self.states.shape[1]} and {self.inputs.shape[1]}"
            )
        if self.states.shape[1] < 2:
            raise ValueError("insufficient snapshots: need m >= 2")
        if self.dt <= 0:
            raise ValueError("dt must be positive")

    @property
    def n(self) -> int:
        return self.states.shape[0]

    @property
    def q(self) -> int:
        return self.inputs.shape[0]

    @property
    def m(self) -> int:
        return self.states.shape[1]

    def head(self, m: int) -> "SnapshotDataset":
        """First ``m`` snapshot pairs (training split)."""
        if not 2 <= m <= self.m:
            raise ValueError(f"m must be in [2, {self.m}], got {m}")
        return SnapshotDataset(self.states[:, :m], self.inputs[:, :m], self.dt)


def split_snapshots(ds: SnapshotDataset):
    """Split a dataset into regression blocks (X, Y, Ups).

    X holds snapshots 1..m-1, Y the shifted snapshots 2..m, and Ups the
    inputs aligned with X, so that column k of Y is the successor of column
    k of X under input column k of Ups.
    """
    if ds.m < 2:
        raise ValueError("insufficient snapshots: need m >= 2")
    X = ds.states[:, :-1]
    Y = ds.states[:, 1:]
    Ups = ds.inputs[:, :-1]
    return X, Y, Ups


def write_matrix(path, mat: np.ndarray) -> None:
    """Write ``mat`` to ``path`` in the DMDMAT01 binary format (bit-exact)."""
    mat = as_matrix(mat)
    path = Path(path)
    header = _HEADER.pack(MAGIC, mat.shape[0], mat.shape[1])
    payload = np.ascontiguousarray(mat, dtype="<f8").tobytes(order="C")
    try:
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(payload)
    except OSError as exc:
        raise OSError(f"cannot write matrix file {path}: {exc}") from exc


def read_matrix(path) -> np.ndarray:
    """Read a DMDMAT01 file back into a 2-D float64 array (inverse of write)."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise OSError(f"cannot read matrix file {path}: {exc}") from exc
    if len(raw) < _HEADER.size:
        raise ValueError(f"{path}: not a matrix file (truncated header)")
    magic, rows, cols = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ValueError(f"{path}: not a matrix file (bad magic {magic!r})")
    expected = _HEADER.size + 8 * rows * cols
    if len(raw) != expected:
        raise ValueError(
            f"{path}: corrupt (expected {expected} bytes for {rows}x{cols}, got {len(raw)})"
        )
    data = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size).reshape(rows, cols)
    if not np.isfinite(data).all():
        raise ValueError(f"{path}: invalid data (NaN/Inf entries)")
    return np.ascontiguousarray(data, dtype=np.float64)


def write_csv(path, mat: np.ndarray) -> None:
    """Write ``mat`` as comma-separated text, one row per line, 17 significant digits."""
    mat = as_matrix(mat)
    path = Path(path)
    with open(path, "w") as fh:
        for row in mat:
            fh.write(",".join(f"{v:.17g}" for v in row))
            fh.write("\n")


def save_dataset(directory, ds: SnapshotDataset) -> None:
    """Persist a dataset as states.dmdmat + inputs.dmdmat + dataset.meta."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_matrix(directory / "states.dmdmat", ds.states)
    write_matrix(directory / "inputs.dmdmat", ds.inputs)
    meta = f"n = {ds.n}\nq = {ds.q}\nm = {ds.m}\ndt = {ds.dt!r}\n"
    (directory / "dataset.meta").write_text(meta)


def load_dataset(directory) -> SnapshotDataset:
    directory = Path(directory)
    states = read_matrix(directory / "states.dmdmat")
    inputs = read_matrix(directory / "inputs.dmdmat")
    dt = 1.0
    meta = directory / "dataset.meta"
    if meta.exists():
        for line in meta.read_text().splitlines():
            key, _, value = line.partition("=")
            if key.strip() == "dt":
                dt = float(value)
    return SnapshotDataset(states, inputs, dt)
