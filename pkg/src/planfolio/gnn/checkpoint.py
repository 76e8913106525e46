"""Binary checkpoint container.

Layout (all integers little-endian)::

    8 bytes   magic  b"PFOLIOCK"
    4 bytes   uint32 format version
    8 bytes   uint64 header length H
    H bytes   UTF-8 JSON header
    ...       float64 little-endian buffers, back to back

The header holds the model version, the ModelConfig, free-form metadata and
one entry per buffer: {"name", "shape", "offset", "count"} where offset and
count are in float64 elements from the start of the buffer region.  Buffers
named ``param/<key>`` are parameters, ``norm/<key>`` normalization stats.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Optional

import numpy as np

from .model import MODEL_VERSION, Model, ModelConfig

MAGIC = b"PFOLIOCK"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    """Corrupt, truncated or incompatible checkpoint."""


def to_bytes(model: Model, metadata: Optional[dict] = None) -> bytes:
    buffers = [(f"param/{k}", model.params[k]) for k in sorted(model.params)]
    buffers += [(f"norm/{k}", np.asarray(model.norm[k], dtype=float)) for k in sorted(model.norm)]
    entries, offset = [], 0
    for name, arr in buffers:
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset,
                        "count": int(arr.size)})
        offset += int(arr.size)
    header = json.dumps({
        "model_version": model.version,
        "config": model.config.to_dict(),
        "metadata": metadata or {},
        "buffers": entries,
    }, sort_keys=True).encode()
    body = b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for _, a in buffers)
    return MAGIC + struct.pack("<IQ", FORMAT_VERSION, len(header)) + header + body


def from_bytes(data: bytes) -> tuple[Model, dict]:
    if data[:8] != MAGIC:
        raise CheckpointError("not a planfolio checkpoint (bad magic)")
    try:
        version, hlen = struct.unpack("<IQ", data[8:20])
    except struct.error as e:
        raise CheckpointError("truncated checkpoint header") from e
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint format {version}")
    header = json.loads(data[20:20 + hlen].decode())
    if header["model_version"] != MODEL_VERSION:
        raise CheckpointError(f"model version {header['model_version']} != {MODEL_VERSION}")
    body = np.frombuffer(data[20 + hlen:], dtype="<f8")
    params, norm = {}, {}
    for e in header["buffers"]:
        if e["offset"] + e["count"] > body.size:
            raise CheckpointError(f"buffer {e['name']} runs past end of file")
        arr = body[e["offset"]:e["offset"] + e["count"]].astype(np.float64).reshape(e["shape"])
        kind, key = e["name"].split("/", 1)
        (params if kind == "param" else norm)[key] = arr
    model = Model(ModelConfig.from_dict(header["config"]), params=params, norm=norm)
    expected = Model(model.config).params
    if set(expected) != set(params) or any(expected[k].shape != params[k].shape for k in params):
        raise CheckpointError("parameter set does not match the stored config")
    return model, header["metadata"]


def save(model: Model, path, metadata: Optional[dict] = None) -> None:
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(to_bytes(model, metadata))
    tmp.replace(path)


def load(path) -> tuple[Model, dict]:
    return from_bytes(Path(path).read_bytes())
