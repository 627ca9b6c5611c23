"""Binary interchange format for stacks of square matrices.

Layout: one UTF-8 JSON header line terminated by ``\\n``, e.g.

    {"nu": 12, "dim": 8, "order": "row-major", "dtype": "f64le"}

followed by exactly nu*dim*dim little-endian 64-bit floats in row-major
order.  Reading and writing round-trip losslessly.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import DimensionError

_HEADER_ORDER = "row-major"
_HEADER_DTYPE = "f64le"


def _as_stack(data) -> np.ndarray:
    arr = np.asarray(data, dtype=float)
    if arr.ndim == 2 and arr.shape[0] == arr.shape[1]:
        arr = arr[None, :, :]
    if arr.ndim != 3 or arr.shape[1] != arr.shape[2]:
        raise DimensionError(f"expected (nu, d, d) stack, got shape {arr.shape}")
    return arr


def dump_bytes(data) -> bytes:
    arr = _as_stack(data)
    header = {
        "nu": int(arr.shape[0]),
        "dim": int(arr.shape[1]),
        "order": _HEADER_ORDER,
        "dtype": _HEADER_DTYPE,
    }
    body = np.ascontiguousarray(arr, dtype="<f8").tobytes()
    return json.dumps(header).encode("utf-8") + b"\n" + body


def write_tensor(path, data) -> None:
    Path(path).write_bytes(dump_bytes(data))


def load_bytes(raw: bytes) -> np.ndarray:
    newline = raw.find(b"\n")
    if newline < 0:
        raise DimensionError("missing header line")
    try:
        header = json.loads(raw[:newline].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DimensionError(f"bad header: {exc}") from exc
    try:
        nu, dim = int(header["nu"]), int(header["dim"])
    except (KeyError, TypeError, ValueError) as exc:
        raise DimensionError(f"bad header fields: {header}") from exc
    if header.get("order") != _HEADER_ORDER or header.get("dtype") != _HEADER_DTYPE:
        raise DimensionError(f"unsupported layout: {header}")
    body = raw[newline + 1 :]
    expected = nu * dim * dim * 8
    if len(body) != expected:
        raise DimensionError(
            f"payload is {len(body)} bytes, header implies {expected}"
        )
    flat = np.frombuffer(body, dtype="<f8")
    return flat.reshape(nu, dim, dim).astype(float)


def read_tensor(path) -> np.ndarray:
    return load_bytes(Path(path).read_bytes())
