"""Field snapshots.

Binary layout (little endian): magic ``b"NNCH"``, u32 version, u32 nx,
u32 ny, u8 field kind, then ``nx*ny`` f64 values in row-major order.  ``nx``
and ``ny`` are the extents of the stored array (face arrays carry one extra
row or column on walled axes).
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"NNCH"
VERSION = 1
HEADER = struct.Struct("<4sIIIB")
FIELD_KINDS = {"c": 0, "mu": 1, "p": 2, "u": 3, "v": 4}
KIND_NAMES = {v: k for k, v in FIELD_KINDS.items()}


class SnapshotError(ValueError):
    pass


def write_binary(path, array: np.ndarray, kind: str) -> Path:
    a = np.ascontiguousarray(array, dtype="<f8")
    if a.ndim != 2:
        raise SnapshotError("snapshot arrays must be two-dimensional")
    path = Path(path)
    with path.open("wb") as fh:
        fh.write(HEADER.pack(MAGIC, VERSION, a.shape[0], a.shape[1], FIELD_KINDS[kind]))
        fh.write(a.tobytes(order="C"))
    return path


def read_binary(path) -> tuple[np.ndarray, str]:
    data = Path(path).read_bytes()
    if len(data) < HEADER.size:
        raise SnapshotError(f"{path}: truncated header")
    magic, version, nx, ny, kind = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise SnapshotError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise SnapshotError(f"{path}: unsupported version {version}")
    payload = data[HEADER.size :]
    if len(payload) != 8 * nx * ny:
        raise SnapshotError(f"{path}: payload size does not match {nx}x{ny}")
    arr = np.frombuffer(payload, dtype="<f8").reshape(nx, ny).astype(float)
    return arr, KIND_NAMES.get(kind, str(kind))


def write_csv(path, array: np.ndarray, x: np.ndarray, y: np.ndarray) -> Path:
    """One row per point: ``i, j, x, y, value``."""
    ii, jj = np.meshgrid(np.arange(array.shape[0]), np.arange(array.shape[1]), indexing="ij")
    table = np.column_stack([ii.ravel(), jj.ravel(), x.ravel(), y.ravel(), array.ravel()])
    path = Path(path)
    np.savetxt(path, table, delimiter=",", header="i,j,x,y,value", comments="", fmt=["%d", "%d", "%.17g", "%.17g", "%.17g"])
    return path


def read_csv(path) -> np.ndarray:
    table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    nx, ny = int(table[:, 0].max()) + 1, int(table[:, 1].max()) + 1
    return table[:, 4].reshape(nx, ny)
