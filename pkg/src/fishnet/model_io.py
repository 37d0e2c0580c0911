"""Binary model files: magic "CNF1", versioned header, JSON metadata, raw params.

Layout, all integers little-endian unsigned 32-bit:

    bytes 0..3   magic b"CNF1"
    bytes 4..7   format version (currently 1)
    u32          metadata length, then that many bytes of UTF-8 JSON
                 (model config, class names, seed, training flags)
    u32          parameter count, then per parameter:
                     u32 ndim, ndim * u32 dims, dims-product * 8 bytes of
                     little-endian float64 data, in layer order

Parameters round-trip bitwise.  Writes go to a temp file in the target
directory and are atomically renamed, so a crashed save never leaves a
partial model behind.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .models import ModelConfig, TrainedModel, build_network

MAGIC = b"CNF1"
VERSION = 1


def save_model(path, model: TrainedModel) -> None:
    path = Path(path)
    meta = json.dumps(
        {
            "config": model.config.to_dict(),
            "seed": model.seed,
            "flags": model.flags,
        }
    ).encode("utf-8")
    params = model.network.params()

    blob = bytearray()
    blob += MAGIC
    blob += struct.pack("<I", VERSION)
    blob += struct.pack("<I", len(meta))
    blob += meta
    blob += struct.pack("<I", len(params))
    for p in params:
        blob += struct.pack("<I", p.ndim)
        blob += struct.pack(f"<{p.ndim}I", *p.shape)
        blob += np.ascontiguousarray(p, dtype="<f8").tobytes()

    fd, tmp = tempfile.mkstemp(dir=path.parent or Path("."), suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(blob)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class _Reader:
    def __init__(self, data: bytes, path: Path):
        self.data = data
        self.path = path
        self.offset = 0

    def take(self, n: int, what: str) -> bytes:
        if self.offset + n > len(self.data):
            raise ValueError(
                f"truncated model file {self.path}: needed {n} bytes for {what} "
                f"at byte offset {self.offset}, only {len(self.data) - self.offset} left"
            )
        chunk = self.data[self.offset : self.offset + n]
        self.offset += n
        return chunk

    def u32(self, what: str) -> int:
        return struct.unpack("<I", self.take(4, what))[0]


def load_model(path) -> TrainedModel:
    path = Path(path)
    reader = _Reader(path.read_bytes(), path)

    magic = reader.take(4, "magic")
    if magic != MAGIC:
        raise ValueError(f"not a model file (bad magic {magic!r}): {path}")
    version = reader.u32("version")
    if version > VERSION:
        raise ValueError(
            f"model file {path} has format version {version}, newer than the "
            f"supported version {VERSION}; upgrade fishnet to read it"
        )

    meta_len = reader.u32("metadata length")
    meta = json.loads(reader.take(meta_len, "metadata").decode("utf-8"))
    config = ModelConfig.from_dict(meta["config"])
    seed = int(meta["seed"])
    flags = dict(meta.get("flags", {}))

    network = build_network(config, seed)
    params = network.params()
    n_params = reader.u32("parameter count")
    if n_params != len(params):
        raise ValueError(
            f"model file {path} stores {n_params} parameters, "
            f"config expects {len(params)}"
        )
    for p in params:
        ndim = reader.u32("parameter ndim")
        dims = struct.unpack(f"<{ndim}I", reader.take(4 * ndim, "parameter dims"))
        if dims != p.shape:
            raise ValueError(
                f"model file {path} stores shape {dims} where config "
                f"expects {p.shape}"
            )
        count = int(np.prod(dims)) if dims else 1
        raw = reader.take(8 * count, "parameter data")
        p[...] = np.frombuffer(raw, dtype="<f8").reshape(dims)
    return TrainedModel(config, network, seed, flags)
