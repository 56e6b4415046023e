"""Low-level helpers for the little-endian binary file formats.

All multi-byte integers are little-endian. A "tensor block" is
u8 ndim, ndim x u32 dims, then the row-major payload values.
"""

from __future__ import annotations

import struct
from typing import BinaryIO

import numpy as np


class TruncatedFile(Exception):
    """Internal signal; format loaders translate this into their parse error."""


def read_exact(fh: BinaryIO, n: int) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise TruncatedFile(f"expected {n} bytes, got {len(data)}")
    return data


def write_u32(fh: BinaryIO, value: int) -> None:
    fh.write(struct.pack("<I", value))


def read_u32(fh: BinaryIO) -> int:
    return struct.unpack("<I", read_exact(fh, 4))[0]


def write_tensor(fh: BinaryIO, array: np.ndarray, dtype: str = "<f4") -> None:
    arr = np.ascontiguousarray(array, dtype=dtype)
    fh.write(struct.pack("<B", arr.ndim))
    for dim in arr.shape:
        write_u32(fh, dim)
    fh.write(arr.tobytes(order="C"))


def read_tensor(fh: BinaryIO, dtype: str = "<f4") -> np.ndarray:
    ndim = struct.unpack("<B", read_exact(fh, 1))[0]
    shape = tuple(read_u32(fh) for _ in range(ndim))
    count = 1
    for dim in shape:
        count *= dim
    itemsize = np.dtype(dtype).itemsize
    data = read_exact(fh, count * itemsize)
    return np.frombuffer(data, dtype=dtype).reshape(shape).copy()
