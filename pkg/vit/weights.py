"""
ViT weight container (VITW).

Layout: magic "VITW", version u32 LE, the eight ModelConfig fields as u32,
tensor count u32, then per tensor: name length u16 + UTF-8 name, ndim u32,
dims u32 x ndim, payload float64 LE row-major. Tensors keep the order they
were written in, so save(load(blob)) == blob.
"""
import struct
from pathlib import Path
from typing import Union

import numpy as np

from core.errors import DataError
from core.models import ModelConfig
from vit.encoder import Model, parameter_shapes

MAGIC = b"VITW"
VERSION = 1
_U16 = struct.Struct("<H")
_U32 = struct.Struct("<I")


def save_weights(model: Model) -> bytes:
    """Serialize a model to VITW bytes."""
    parts = [MAGIC, _U32.pack(VERSION)]
    parts.extend(_U32.pack(v) for v in model.config.as_tuple())
    parts.append(_U32.pack(len(model.params)))
    for name, array in model.params.items():
        encoded = name.encode("utf-8")
        parts.append(_U16.pack(len(encoded)))
        parts.append(encoded)
        parts.append(_U32.pack(array.ndim))
        parts.extend(_U32.pack(int(d)) for d in array.shape)
        parts.append(np.ascontiguousarray(array, dtype="<f8").tobytes())
    return b"".join(parts)


class _Reader:
    """Cursor over a VITW blob that names what it was reading when it runs out."""

    def __init__(self, blob: bytes):
        self.blob = blob
        self.offset = 0

    def take(self, size: int, what: str) -> bytes:
        end = self.offset + size
        if end > len(self.blob):
            raise DataError(
                f"truncated container: needed {size} bytes for {what} at offset {self.offset}, "
                f"only {len(self.blob) - self.offset} left"
            )
        chunk = self.blob[self.offset:end]
        self.offset = end
        return chunk

    def u16(self, what: str) -> int:
        return _U16.unpack(self.take(2, what))[0]

    def u32(self, what: str) -> int:
        return _U32.unpack(self.take(4, what))[0]


def load_weights(blob: bytes) -> Model:
    """Parse and validate VITW bytes."""
    reader = _Reader(blob)
    magic = reader.take(4, "magic")
    if magic != MAGIC:
        raise DataError(f"bad magic {magic!r}, expected {MAGIC!r}")
    version = reader.u32("version")
    if version != VERSION:
        raise DataError(f"unsupported container version {version}, expected {VERSION}")
    values = {name: reader.u32(f"config field '{name}'") for name in ModelConfig.FIELDS}
    config = ModelConfig(**values).validate()
    expected = parameter_shapes(config)

    count = reader.u32("tensor count")
    params: dict[str, np.ndarray] = {}
    names = iter(expected)
    for index in range(count):
        hint = next(names, f"tensor #{index}")
        name_len = reader.u16(f"name length of tensor '{hint}'")
        name = reader.take(name_len, f"name of tensor '{hint}'").decode("utf-8", errors="strict")
        ndim = reader.u32(f"ndim of tensor '{name}'")
        dims = tuple(reader.u32(f"dims of tensor '{name}'") for _ in range(ndim))
        size = int(np.prod(dims, dtype=np.int64)) if dims else 1
        payload = reader.take(8 * size, f"payload of tensor '{name}'")
        if name in params:
            raise DataError(f"tensor '{name}' appears twice")
        params[name] = np.frombuffer(payload, dtype="<f8").astype(np.float64).reshape(dims)

    if reader.offset != len(blob):
        raise DataError(f"{len(blob) - reader.offset} trailing bytes after the last tensor")

    missing = [name for name in expected if name not in params]
    if missing:
        layer_blocks = {name.split(".")[1] for name in params if name.startswith("blocks.")}
        raise DataError(
            f"config declares {config.num_layers} layer block(s) and {len(expected)} tensors, "
            f"container holds {len(layer_blocks)} layer block(s); missing tensor '{missing[0]}'"
            + (f" and {len(missing) - 1} more" if len(missing) > 1 else "")
        )
    return Model.from_params(config, params)


def write_weights(path: Union[str, Path], model: Model) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(save_weights(model))
    return path


def read_weights(path: Union[str, Path]) -> Model:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"weight file not found: {path}")
    return load_weights(path.read_bytes())
