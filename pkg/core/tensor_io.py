"""
Raw tensor container (TNSR).

Layout: magic "TNSR", version u32 LE, ndim u32, dims u32 x ndim, then the
payload as float64 little-endian in row-major order. Images are channel-last.
"""
import struct
from pathlib import Path
from typing import Union

import numpy as np

from core.errors import DataError

MAGIC = b"TNSR"
VERSION = 1
_U32 = struct.Struct("<I")


def encode_tensor(array: np.ndarray) -> bytes:
    """Serialize an array to TNSR bytes."""
    data = np.ascontiguousarray(array, dtype="<f8")
    header = MAGIC + _U32.pack(VERSION) + _U32.pack(data.ndim)
    header += b"".join(_U32.pack(int(d)) for d in data.shape)
    return header + data.tobytes(order="C")


def decode_tensor(blob: bytes) -> np.ndarray:
    """Parse TNSR bytes back into a float64 array."""
    if len(blob) < 12:
        raise DataError(f"TNSR container truncated: {len(blob)} bytes, need at least 12 for the header")
    if blob[:4] != MAGIC:
        raise DataError(f"bad TNSR magic {blob[:4]!r}, expected {MAGIC!r}")
    version = _U32.unpack_from(blob, 4)[0]
    if version != VERSION:
        raise DataError(f"unsupported TNSR version {version}, expected {VERSION}")
    ndim = _U32.unpack_from(blob, 8)[0]
    offset = 12
    if len(blob) < offset + 4 * ndim:
        raise DataError(f"TNSR container truncated inside the {ndim}-entry dims block")
    dims = tuple(_U32.unpack_from(blob, offset + 4 * i)[0] for i in range(ndim))
    offset += 4 * ndim
    count = int(np.prod(dims, dtype=np.int64)) if dims else 1
    expected = offset + 8 * count
    if len(blob) != expected:
        raise DataError(
            f"TNSR payload size mismatch for dims {dims}: got {len(blob) - offset} bytes, "
            f"expected {8 * count}"
        )
    values = np.frombuffer(blob, dtype="<f8", count=count, offset=offset)
    return values.astype(np.float64).reshape(dims)


def save_tensor(path: Union[str, Path], array: np.ndarray) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_tensor(array))
    return path


def load_tensor(path: Union[str, Path]) -> np.ndarray:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"tensor file not found: {path}")
    return decode_tensor(path.read_bytes())
