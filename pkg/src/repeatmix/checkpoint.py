"""Versioned binary checkpoints: config, named tensors, best metric, epoch."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import config as config_mod
from .config import RunConfig
from .mixer import ParamStore

MAGIC = b"RMXC"
VERSION = 1


@dataclass
class Checkpoint:
    config: RunConfig
    tensors: dict[str, np.ndarray]
    best_val: float
    epoch: int


def save(path: str | Path, run_cfg: RunConfig, params: ParamStore,
         best_val: float, epoch: int) -> None:
    cfg_bytes = config_mod.serialize(run_cfg).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<I", len(cfg_bytes)))
        fh.write(cfg_bytes)
        fh.write(struct.pack("<dq", best_val, epoch))
        fh.write(struct.pack("<I", len(params)))
        for name, p in params.items():
            raw = name.encode("utf-8")
            value = np.ascontiguousarray(p.value, dtype="<f8")
            rows, cols = (value.shape if value.ndim == 2 else (1, value.size))
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<II", rows, cols))
            fh.write(value.tobytes())


def load(path: str | Path) -> Checkpoint:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MAGIC:
            raise ValueError(f"not a checkpoint (magic {magic!r})")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        (cfg_len,) = struct.unpack("<I", fh.read(4))
        overrides = config_mod.parse(fh.read(cfg_len).decode("utf-8"))
        run_cfg = RunConfig(**overrides)  # type: ignore[arg-type]
        best_val, epoch = struct.unpack("<dq", fh.read(16))
        (n_tensors,) = struct.unpack("<I", fh.read(4))
        tensors: dict[str, np.ndarray] = {}
        for _ in range(n_tensors):
            (name_len,) = struct.unpack("<H", fh.read(2))
            name = fh.read(name_len).decode("utf-8")
            rows, cols = struct.unpack("<II", fh.read(8))
            buf = fh.read(8 * rows * cols)
            if len(buf) != 8 * rows * cols:
                raise ValueError("truncated checkpoint")
            tensors[name] = np.frombuffer(buf, dtype="<f8").reshape(rows, cols).copy()
    return Checkpoint(config=run_cfg, tensors=tensors, best_val=best_val, epoch=epoch)


def restore_params(ckpt: Checkpoint, params: ParamStore) -> None:
    """Copy checkpoint tensors into a freshly built ParamStore."""
    if set(ckpt.tensors) != set(params):
        missing = set(params) ^ set(ckpt.tensors)
        raise ValueError(f"checkpoint/config tensor mismatch: {sorted(missing)}")
    for name, p in params.items():
        stored = ckpt.tensors[name]
        if stored.size != p.value.size:
            raise ValueError(f"tensor {name!r} size mismatch")
        p.value[...] = stored.reshape(p.value.shape)
