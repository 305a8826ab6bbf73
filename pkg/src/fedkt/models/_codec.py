"""Canonical binary layout shared by every model kind.

Layout (all integers little-endian)::

    magic      4 bytes  b"FKTM"
    version    u16      FORMAT_VERSION
    kind       u8       KIND_CODES[kind]
    reserved   u8       0
    n_classes  u32
    dim        u32
    n_arrays   u32
    arrays     n_arrays x (dtype u8, ndim u8, shape u32 * ndim, raw bytes)

Arrays are written in a fixed per-kind order; dtype 0 is float64, 1 is int32.
"""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"FKTM"
FORMAT_VERSION = 1

KIND_CODES = {
    "constant": 0,
    "decision_tree": 1,
    "random_forest": 2,
    "gbdt": 3,
    "logistic_regression": 4,
    "mlp": 5,
}
KIND_NAMES = {v: k for k, v in KIND_CODES.items()}

_DTYPES = {0: np.dtype("<f8"), 1: np.dtype("<i4")}
_HEADER = struct.Struct("<4sHBBIII")


class FormatError(ValueError):
    pass


def _dtype_code(arr: np.ndarray) -> int:
    if arr.dtype.kind == "f":
        return 0
    if arr.dtype.kind in "iu":
        return 1
    raise TypeError(f"unsupported dtype {arr.dtype}")


def encode(kind: str, n_classes: int, dim: int, arrays: list[np.ndarray]) -> bytes:
    parts = [_HEADER.pack(MAGIC, FORMAT_VERSION, KIND_CODES[kind], 0, n_classes, dim, len(arrays))]
    for arr in arrays:
        code = _dtype_code(arr)
        arr = np.ascontiguousarray(arr, dtype=_DTYPES[code])
        parts.append(struct.pack(f"<BB{arr.ndim}I", code, arr.ndim, *arr.shape))
        parts.append(arr.tobytes())
    return b"".join(parts)


def decode(blob: bytes) -> tuple[str, int, int, list[np.ndarray]]:
    if len(blob) < _HEADER.size:
        raise FormatError("truncated header")
    magic, version, code, _, n_classes, dim, n_arrays = _HEADER.unpack_from(blob, 0)
    if magic != MAGIC:
        raise FormatError("not a serialized model")
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported format version {version}")
    if code not in KIND_NAMES:
        raise FormatError(f"unknown model kind code {code}")
    pos = _HEADER.size
    arrays = []
    for _ in range(n_arrays):
        dcode, ndim = struct.unpack_from("<BB", blob, pos)
        pos += 2
        shape = struct.unpack_from(f"<{ndim}I", blob, pos)
        pos += 4 * ndim
        dt = _DTYPES[dcode]
        nbytes = int(np.prod(shape, dtype=np.int64)) * dt.itemsize
        if pos + nbytes > len(blob):
            raise FormatError("truncated array payload")
        arrays.append(np.frombuffer(blob, dtype=dt, count=nbytes // dt.itemsize, offset=pos).reshape(shape).copy())
        pos += nbytes
    if pos != len(blob):
        raise FormatError("trailing bytes after model payload")
    return KIND_NAMES[code], n_classes, dim, arrays
