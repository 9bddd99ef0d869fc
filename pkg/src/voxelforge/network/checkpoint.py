"""ENCK checkpoint files.

Layout, little-endian::

    4s   magic "ENCK"
    u32  format version (1)
    u32  config length in bytes, then that many bytes of UTF-8 JSON
    u32  tensor count
    per tensor, in parameter declaration order:
        u32 ndim, ndim x u32 shape, then float32 values (C order)
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..errors import FormatError, ShapeMismatchError
from .model import EdgeNet, NetworkConfig

MAGIC = b"ENCK"
VERSION = 1


def save_checkpoint(path, net: EdgeNet, extra=None):
    cfg = {"network": net.cfg.to_dict(), **(extra or {})}
    blob = json.dumps(cfg, sort_keys=True).encode()
    params = net.named_params()
    parts = [MAGIC, struct.pack("<II", VERSION, len(blob)), blob, struct.pack("<I", len(params))]
    for _, v, _ in params:
        parts.append(struct.pack(f"<I{v.ndim}I", v.ndim, *v.shape))
        parts.append(np.ascontiguousarray(v, dtype="<f4").tobytes())
    Path(path).write_bytes(b"".join(parts))


def read_checkpoint(path):
    """Return (config dict, list of float32 arrays)."""
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise FormatError(f"{path}: not an ENCK checkpoint")
    try:
        version, n = struct.unpack_from("<II", raw, 4)
        if version != VERSION:
            raise FormatError(f"{path}: unsupported checkpoint version {version}")
        pos = 12
        cfg = json.loads(raw[pos : pos + n].decode())
        pos += n
        (count,) = struct.unpack_from("<I", raw, pos)
        pos += 4
        tensors = []
        for _ in range(count):
            (ndim,) = struct.unpack_from("<I", raw, pos)
            shape = struct.unpack_from(f"<{ndim}I", raw, pos + 4)
            pos += 4 + 4 * ndim
            size = int(np.prod(shape)) * 4
            if pos + size > len(raw):
                raise FormatError(f"{path}: truncated tensor data")
            tensors.append(np.frombuffer(raw, dtype="<f4", count=size // 4, offset=pos).reshape(shape).copy())
            pos += size
    except struct.error as e:
        raise FormatError(f"{path}: truncated checkpoint") from e
    return cfg, tensors


def load_checkpoint(path, dtype=np.float32):
    """Rebuild the network stored at ``path``; returns (net, config dict)."""
    cfg, tensors = read_checkpoint(path)
    net = EdgeNet(NetworkConfig.from_dict(cfg["network"]), dtype=dtype)
    params = net.named_params()
    if len(params) != len(tensors):
        raise ShapeMismatchError(f"checkpoint holds {len(tensors)} tensors, network expects {len(params)}")
    for (name, v, _), t in zip(params, tensors):
        if v.shape != t.shape:
            raise ShapeMismatchError(f"{name}: checkpoint shape {t.shape} != network shape {v.shape}")
        v[...] = t
    return net, cfg
