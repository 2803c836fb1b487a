"""Binary checkpoint: magic, version, JSON config, then parameter tensors.

Layout (little-endian)::

    int32 magic, int32 version
    uint32 config length, config JSON (utf-8, sorted keys)
    uint32 tensor count
    per tensor: uint32 ndim, ndim x uint32 dims, float64 data (C order)

Tensors appear in the model's declaration order.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .model import TemporalModel, TemporalModelConfig, param_shapes

MAGIC = int.from_bytes(b"TGCK", "little")
VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(fh, model: TemporalModel) -> None:
    cfg = json.dumps(model.config.to_dict(), sort_keys=True).encode("utf-8")
    fh.write(struct.pack("<iiI", MAGIC, VERSION, len(cfg)))
    fh.write(cfg)
    fh.write(struct.pack("<I", len(model.params)))
    for arr in model.params.values():
        fh.write(struct.pack(f"<I{arr.ndim}I", arr.ndim, *arr.shape))
        fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(fh) -> TemporalModel:
    data = fh.read()
    try:
        magic, version, clen = struct.unpack_from("<iiI", data, 0)
        if magic != MAGIC:
            raise CheckpointError("bad magic")
        if version != VERSION:
            raise CheckpointError(f"unsupported version {version}")
        off = 12
        config = TemporalModelConfig.from_dict(json.loads(data[off:off + clen].decode("utf-8")))
        off += clen
        (count,) = struct.unpack_from("<I", data, off)
        off += 4
        shapes = param_shapes(config)
        if count != len(shapes):
            raise CheckpointError("tensor count does not match the configuration")
        params = {}
        for name, shape in shapes.items():
            (ndim,) = struct.unpack_from("<I", data, off)
            off += 4
            dims = struct.unpack_from(f"<{ndim}I", data, off)
            off += 4 * ndim
            if tuple(dims) != shape:
                raise CheckpointError(f"{name}: stored shape {dims}, expected {shape}")
            size = int(np.prod(dims, dtype=np.int64))
            params[name] = np.frombuffer(data, "<f8", size, off).reshape(dims).astype(float)
            off += 8 * size
    except (struct.error, ValueError, UnicodeDecodeError, TypeError) as exc:
        if isinstance(exc, CheckpointError):
            raise
        raise CheckpointError(f"corrupt checkpoint: {exc}") from None
    if off != len(data):
        raise CheckpointError("trailing bytes in checkpoint")
    return TemporalModel(config, params)
