"""Self-contained model checkpoints.

Layout (little-endian)::

    b"RFCK" | version u16 | header_len u32 | JSON header (UTF-8) | tensor data

The JSON header lists the layer specs, input shape and, in declaration
order, every stored tensor's ``(layer, name, shape, dtype)``. Tensor data
follows in that order: trainable tensors as float32, BatchNorm running
statistics as float64. Caller metadata (standardization stats,
calibration, class mapping, ...) rides in the header's ``meta`` field.
"""
from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from ..errors import FormatError
from .layers import spec_from_dict
from .model import Sequential

MAGIC = b"RFCK"
VERSION = 1
PREFIX = struct.Struct("<4sHI")


def _tensors(model: Sequential):
    for i, (p, s) in enumerate(zip(model.params, model.state)):
        for name in sorted(p):
            yield i, name, p[name], "<f4"
        for name in sorted(s):
            yield i, "state:" + name, s[name], "<f8"


def dumps(model: Sequential, meta: dict | None = None) -> bytes:
    entries, blobs = [], []
    for i, name, arr, dtype in _tensors(model):
        entries.append({"layer": i, "name": name, "shape": list(arr.shape), "dtype": dtype})
        blobs.append(np.ascontiguousarray(arr, dtype=dtype).tobytes())
    header = {
        "format": "rffguard-checkpoint",
        "input_shape": list(model.input_shape),
        "seed": model.seed,
        "layers": [s.to_dict() for s in model.specs],
        "tensors": entries,
        "meta": meta or {},
    }
    hbytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    return PREFIX.pack(MAGIC, VERSION, len(hbytes)) + hbytes + b"".join(blobs)


def loads(raw: bytes, dtype=np.float32) -> tuple[Sequential, dict]:
    if len(raw) < PREFIX.size:
        raise FormatError("truncated checkpoint prefix", len(raw))
    magic, version, hlen = PREFIX.unpack_from(raw)
    if magic != MAGIC:
        raise FormatError(f"bad checkpoint magic {magic!r}", 0)
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}", 4)
    end = PREFIX.size + hlen
    if len(raw) < end:
        raise FormatError("truncated checkpoint header", len(raw))
    try:
        header = json.loads(raw[PREFIX.size:end])
    except ValueError as exc:
        raise FormatError(f"corrupt checkpoint header: {exc}", PREFIX.size) from None
    specs = [spec_from_dict(d) for d in header["layers"]]
    model = Sequential(specs, header["input_shape"], header.get("seed", 0), dtype)
    offset = end
    for entry in header["tensors"]:
        count = int(np.prod(entry["shape"], dtype=np.int64))
        nbytes = count * np.dtype(entry["dtype"]).itemsize
        if offset + nbytes > len(raw):
            raise FormatError(f"truncated tensor {entry['name']} of layer {entry['layer']}", len(raw))
        arr = np.frombuffer(raw, entry["dtype"], count, offset).reshape(entry["shape"])
        offset += nbytes
        i, name = entry["layer"], entry["name"]
        if name.startswith("state:"):
            model.state[i][name[6:]] = arr.astype(np.float64)
        else:
            model.params[i][name] = arr.astype(dtype)
    if offset != len(raw):
        raise FormatError("trailing bytes after last tensor", offset)
    return model, header["meta"]


def save(path, model: Sequential, meta: dict | None = None) -> str:
    """Write a checkpoint and return its SHA-256 hex digest."""
    raw = dumps(model, meta)
    Path(path).write_bytes(raw)
    return hashlib.sha256(raw).hexdigest()


def load(path, dtype=np.float32) -> tuple[Sequential, dict]:
    return loads(Path(path).read_bytes(), dtype)
