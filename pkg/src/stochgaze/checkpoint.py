"""Versioned checkpoint files.

Layout: the magic line ``STOCHGAZE-CKPT\\n``, one line of JSON header
(sorted keys) terminated by ``\\n``, then every tensor as little-endian
float64 in C order. The header records the format version, the tensor
table (name, shape, element offset, element count), the experiment
config snapshot, the epoch and the last running metrics.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .model import PARAM_NAMES, ModelParams

MAGIC = b"STOCHGAZE-CKPT\n"
VERSION = 1


class CheckpointError(ValueError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


@dataclass
class Checkpoint:
    params: ModelParams
    config: dict = field(default_factory=dict)
    epoch: int = 0
    metrics: dict = field(default_factory=dict)
    prior_mode: str = "gaze"


def to_bytes(ckpt: Checkpoint) -> bytes:
    tensors, chunks, offset = [], [], 0
    for name in PARAM_NAMES:
        arr = np.ascontiguousarray(getattr(ckpt.params, name), dtype="<f8")
        tensors.append({"name": name, "shape": list(arr.shape), "offset": offset, "count": int(arr.size)})
        chunks.append(arr.tobytes())
        offset += arr.size
    header = {
        "format": "stochgaze-checkpoint", "version": VERSION, "tensors": tensors,
        "dims": ckpt.params.dims, "config": ckpt.config, "epoch": ckpt.epoch,
        "metrics": ckpt.metrics, "prior_mode": ckpt.prior_mode,
    }
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode() + b"\n"
    return MAGIC + head + b"".join(chunks)


def from_bytes(raw: bytes) -> Checkpoint:
    if not raw.startswith(MAGIC):
        raise CheckpointError("not a stochgaze checkpoint (bad magic)")
    end = raw.index(b"\n", len(MAGIC))
    try:
        header = json.loads(raw[len(MAGIC):end])
    except json.JSONDecodeError as e:
        raise CheckpointError(f"corrupt checkpoint header: {e}") from e
    if header.get("version") != VERSION:
        raise CheckpointVersionError(f"checkpoint format version {header.get('version')}, expected {VERSION}")
    data = np.frombuffer(raw[end + 1:], dtype="<f8")
    arrays = {}
    for t in header["tensors"]:
        if t["offset"] + t["count"] > data.size:
            raise CheckpointError(f"tensor {t['name']} truncated")
        arrays[t["name"]] = data[t["offset"]:t["offset"] + t["count"]].reshape(t["shape"]).astype(np.float64)
    missing = set(PARAM_NAMES) - set(arrays)
    if missing:
        raise CheckpointError(f"checkpoint lacks tensors {sorted(missing)}")
    return Checkpoint(ModelParams(**arrays), header["config"], header["epoch"], header["metrics"],
                      header.get("prior_mode", "gaze"))


def save_checkpoint(ckpt: Checkpoint, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(to_bytes(ckpt))
    return path


def load_checkpoint(path) -> Checkpoint:
    return from_bytes(Path(path).read_bytes())
