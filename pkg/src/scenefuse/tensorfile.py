"""Binary tensor files.

Layout, all little-endian:

    bytes 0-3   magic "SICT"
    u32         format version (1)
    u32         element dtype (1 = 32-bit float)
    u32         ndim
    ndim x u64  dimension sizes
    payload     row-major 32-bit floats, product(dims) elements

Values are stored at 32-bit precision; readers return float32 arrays and
round-trips are bit-exact.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import (
    BadDtypeError,
    BadMagicError,
    BadVersionError,
    DimOverflowError,
    TrailingDataError,
    TruncatedPayloadError,
)

MAGIC = b"SICT"
VERSION = 1
DTYPE_F32 = 1
_MAX_NDIM = 32
_MAX_ELEMENTS = (1 << 63) - 1


def write_tensor(path: str | Path, values) -> None:
    """Serialize an array as 32-bit floats; parent directories must exist."""
    arr = np.ascontiguousarray(np.asarray(values), dtype="<f4")
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim > _MAX_NDIM:
        raise DimOverflowError(f"tensor rank {arr.ndim} exceeds {_MAX_NDIM}")
    header = MAGIC + struct.pack("<III", VERSION, DTYPE_F32, arr.ndim)
    header += struct.pack(f"<{arr.ndim}Q", *arr.shape)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(arr.tobytes(order="C"))


def read_tensor(path: str | Path) -> np.ndarray:
    """Read a tensor written by :func:`write_tensor`; returns float32."""
    blob = Path(path).read_bytes()
    if len(blob) < 16 or blob[:4] != MAGIC:
        raise BadMagicError(f"{path}: bad or missing magic bytes")
    version, dtype, ndim = struct.unpack_from("<III", blob, 4)
    if version != VERSION:
        raise BadVersionError(f"{path}: unsupported version {version}")
    if dtype != DTYPE_F32:
        raise BadDtypeError(f"{path}: unknown dtype code {dtype}")
    if ndim == 0 or ndim > _MAX_NDIM:
        raise DimOverflowError(f"{path}: implausible rank {ndim}")
    dims_end = 16 + 8 * ndim
    if len(blob) < dims_end:
        raise TruncatedPayloadError(f"{path}: header cut short")
    dims = struct.unpack_from(f"<{ndim}Q", blob, 16)
    n_elements = 1
    for dim in dims:
        n_elements *= dim
        if n_elements > _MAX_ELEMENTS:
            raise DimOverflowError(f"{path}: dimensions {dims} overflow")
    expected = n_elements * 4
    payload = blob[dims_end:]
    if len(payload) < expected:
        raise TruncatedPayloadError(
            f"{path}: payload holds {len(payload)} bytes, need {expected}"
        )
    if len(payload) > expected:
        raise TrailingDataError(
            f"{path}: {len(payload) - expected} unexpected trailing bytes"
        )
    return np.frombuffer(payload, dtype="<f4").reshape(dims).copy()
