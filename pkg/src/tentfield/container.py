"""Binary container shared by fields, multiplier grids and kernel dumps.

Layout: 8 magic bytes, a little-endian uint64 header length, a UTF-8
JSON header, then the array as raw row-major little-endian complex
values.  The header records ``kind``, ``dtype`` and ``shape`` plus any
grid description the caller adds.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .bumps import AlphaGrid, Field, GridMeasure
from .geometry import PlaneGrid, curve_from_dict
from .modelform import KernelField

MAGIC = b"TENTFLD1"
DTYPES = {"complex64": "<c8", "complex128": "<c16"}


class ContainerError(ValueError):
    pass


def write_container(path, array, header: dict | None = None, dtype: str = "complex128") -> Path:
    if dtype not in DTYPES:
        raise ContainerError(f"dtype must be one of {sorted(DTYPES)}")
    arr = np.ascontiguousarray(np.asarray(array), dtype=DTYPES[dtype])
    head = dict(header or {})
    head.update(dtype=dtype, shape=list(arr.shape))
    blob = json.dumps(head, sort_keys=True).encode("utf-8")
    path = Path(path)
    with path.open("wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        fh.write(arr.tobytes(order="C"))
    return path


def read_container(path):
    """Returns ``(array, header)``."""
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise ContainerError("not a tentfield container")
    if len(raw) < 16:
        raise ContainerError("truncated container")
    (n,) = struct.unpack("<Q", raw[8:16])
    try:
        head = json.loads(raw[16:16 + n].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ContainerError(f"bad header: {exc}") from exc
    dt = DTYPES.get(head.get("dtype"))
    if dt is None:
        raise ContainerError(f"unknown dtype {head.get('dtype')!r}")
    shape = tuple(head["shape"])
    body = raw[16 + n:]
    want = int(np.prod(shape)) * np.dtype(dt).itemsize
    if len(body) != want:
        raise ContainerError(f"payload has {len(body)} bytes, header implies {want}")
    return np.frombuffer(body, dtype=dt).reshape(shape).astype(np.complex128), head


# ---------------------------------------------------------------------------
# typed wrappers

def save_field(F: Field, path, dtype: str = "complex128") -> Path:
    head = {"kind": "field", "j": F.j, "alpha": F.alpha.header(), "grid": F.measure.grid.header(),
            "curve": F.measure.curve.to_json(), "meta": F.meta}
    return write_container(path, F.values, head, dtype)


def load_field(path) -> Field:
    vals, head = read_container(path)
    if head.get("kind") != "field":
        raise ContainerError("container does not hold a field")
    g = head["grid"]
    measure = GridMeasure(PlaneGrid.from_edges(g["e1"], g["e2"]), curve_from_dict(head["curve"]))
    a = head["alpha"]
    return Field(vals, AlphaGrid(int(a["n"]), float(a["h"]), float(a["x0"])), measure,
                 int(head["j"]), meta=head.get("meta", {}))


def save_multiplier_grid(grid: PlaneGrid, values, path, dtype: str = "complex128") -> Path:
    v = np.asarray(values).reshape(grid.shape)
    return write_container(path, v, {"kind": "multiplier", "grid": grid.header()}, dtype)


def load_multiplier_grid(path):
    """Returns ``(grid, values)``; pass both to ``multiplier.grid_multiplier``."""
    vals, head = read_container(path)
    if head.get("kind") != "multiplier":
        raise ContainerError("container does not hold a multiplier grid")
    g = head["grid"]
    grid = PlaneGrid.from_edges(g["e1"], g["e2"])
    if vals.shape != grid.shape:
        raise ContainerError("multiplier samples do not match the grid")
    return grid, vals


def save_kernel(K, path, dtype: str = "complex128") -> Path:
    head = {"kind": "kernel", "beta": np.asarray(K.beta).tolist(), "d": K.d, "pair": list(K.pair),
            "nodes_a": np.asarray(K.nodes_a).tolist(), "nodes_b": np.asarray(K.nodes_b).tolist(),
            "meta": K.meta}
    return write_container(path, K.weights, head, dtype)


def load_kernel(path):
    vals, head = read_container(path)
    if head.get("kind") != "kernel":
        raise ContainerError("container does not hold a kernel")
    return KernelField(np.asarray(head["beta"]), float(head["d"]), tuple(head["pair"]),
                       np.asarray(head["nodes_a"]), np.asarray(head["nodes_b"]), vals, head.get("meta", {}))
