"""Model checkpoint file.

Layout (little-endian)::

    b"WITCK1"  uint16 version  uint32 meta_len  meta (UTF-8 JSON)
    uint32 n_params
    per parameter: uint16 name_len, name, uint8 requires_grad, uint8 ndim,
                   int64 * ndim shape, float64 data
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .baseline import BaseDNN, BaseDNNConfig
from .model import WiT, WiTConfig
from .numcore import Tensor

MAGIC = b"WITCK1"
VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(model, path: str | Path, extra: dict | None = None) -> None:
    meta = dict(model.meta())
    if extra:
        meta["extra"] = extra
    blob = json.dumps(meta, sort_keys=True).encode()
    parts = [MAGIC, struct.pack("<HI", VERSION, len(blob)), blob, struct.pack("<I", len(model.params))]
    for name, t in model.params.items():
        nb = name.encode()
        data = np.ascontiguousarray(t.data, dtype="<f8")
        parts.append(struct.pack("<H", len(nb)) + nb)
        parts.append(struct.pack("<BB", int(t.requires_grad), data.ndim))
        parts.append(struct.pack(f"<{data.ndim}q", *data.shape))
        parts.append(data.tobytes())
    Path(path).write_bytes(b"".join(parts))


def load_checkpoint(path: str | Path):
    """Rebuild the model stored at ``path``; returns ``(model, meta)``."""
    raw = Path(path).read_bytes()
    if raw[:6] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint")
    try:
        version, mlen = struct.unpack_from("<HI", raw, 6)
        if version != VERSION:
            raise CheckpointError(f"{path}: unsupported version {version}")
        off = 12
        meta = json.loads(raw[off : off + mlen].decode())
        off += mlen
        (count,) = struct.unpack_from("<I", raw, off)
        off += 4
        params = {}
        for _ in range(count):
            (nlen,) = struct.unpack_from("<H", raw, off)
            off += 2
            name = raw[off : off + nlen].decode()
            off += nlen
            rg, ndim = struct.unpack_from("<BB", raw, off)
            off += 2
            shape = struct.unpack_from(f"<{ndim}q", raw, off)
            off += 8 * ndim
            n = int(np.prod(shape)) if ndim else 1
            data = np.frombuffer(raw, dtype="<f8", count=n, offset=off).reshape(shape).astype(np.float64)
            off += 8 * n
            params[name] = Tensor(data, requires_grad=bool(rg), name=name)
    except (struct.error, ValueError) as exc:
        if isinstance(exc, CheckpointError):
            raise
        raise CheckpointError(f"{path}: corrupt checkpoint ({exc})") from exc
    if off != len(raw):
        raise CheckpointError(f"{path}: trailing bytes")

    cfg = {k: v for k, v in meta.items() if k not in ("kind", "extra")}
    if meta["kind"] == "wit":
        model = WiT(WiTConfig(**cfg), params=params)
    elif meta["kind"] == "base":
        model = BaseDNN(BaseDNNConfig(**cfg), params=params)
    else:
        raise CheckpointError(f"{path}: unknown model kind {meta['kind']!r}")
    return model, meta
