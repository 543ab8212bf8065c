"""``.spt`` single-tensor files.

Layout: magic ``b"SPT1"``, one byte dtype code (0 = float32, 1 = uint32), one
byte rank, one little-endian u64 extent per axis, then the row-major
little-endian payload.
"""

from __future__ import annotations

import os
import struct
from pathlib import Path

import numpy as np

from .errors import SptFormatError

MAGIC = b"SPT1"
DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<u4")}
CODES = {"float32": 0, "uint32": 1}


def encode_spt(array, dtype: str = "float32") -> bytes:
    if dtype not in CODES:
        raise SptFormatError(f"unsupported dtype {dtype!r}")
    code = CODES[dtype]
    a = np.asarray(array)
    if a.ndim > 255:
        raise SptFormatError("rank above 255")
    if code == 1:
        af = np.asarray(a, dtype=np.float64)
        if np.any(af < 0) or np.any(af > np.iinfo(np.uint32).max) or np.any(af != np.round(af)):
            raise SptFormatError("uint32 payload requires nonnegative integer values")
    payload = np.ascontiguousarray(a, dtype=DTYPES[code]).tobytes(order="C")
    header = MAGIC + struct.pack("<BB", code, a.ndim) + struct.pack(f"<{a.ndim}Q", *a.shape)
    return header + payload


def decode_spt(buf: bytes, name: str = "<buffer>") -> np.ndarray:
    if len(buf) < 6 or buf[:4] != MAGIC:
        raise SptFormatError(f"{name}: bad magic")
    code, ndim = struct.unpack_from("<BB", buf, 4)
    if code not in DTYPES:
        raise SptFormatError(f"{name}: unknown dtype code {code}")
    head = 6 + 8 * ndim
    if len(buf) < head:
        raise SptFormatError(f"{name}: truncated header")
    shape = struct.unpack_from(f"<{ndim}Q", buf, 6)
    dt = DTYPES[code]
    expected = int(np.prod(shape, dtype=np.uint64)) * dt.itemsize
    if len(buf) - head != expected:
        raise SptFormatError(f"{name}: payload is {len(buf) - head} bytes, expected {expected}")
    return np.frombuffer(buf, dtype=dt, offset=head).reshape(shape).copy()


def write_spt(path: str | os.PathLike, array, dtype: str = "float32") -> None:
    Path(path).write_bytes(encode_spt(array, dtype))


def read_spt(path: str | os.PathLike) -> np.ndarray:
    p = Path(path)
    try:
        buf = p.read_bytes()
    except FileNotFoundError:
        raise FileNotFoundError(f"missing tensor file: {p}") from None
    return decode_spt(buf, str(p))
