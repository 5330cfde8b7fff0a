"""Binary checkpoint format.

Layout (little-endian)::

    b"RIML" | u32 version | u32 n | n bytes model config (UTF-8 key=value lines)
    NRM1 input stats | NRM1 target stats
    u32 tensor count | per tensor: u32 rank, rank x u32 dims, f32 data

Tensors are the model's parameters and batch-norm buffers in declaration
order. Data is stored as float32, so a float32 model round-trips exactly.
"""
import struct
from pathlib import Path

import numpy as np

from ..dataset import NormStats
from .network import Model, ModelConfig

__all__ = ["save_checkpoint", "load_checkpoint", "checkpoint_bytes"]

MAGIC = b"RIML"
VERSION = 1


def checkpoint_bytes(model):
    if model.input_stats is None or model.target_stats is None:
        raise ValueError("checkpoint needs both input and target normalization stats")
    cfg = model.cfg.to_text().encode("utf-8")
    parts = [MAGIC, struct.pack("<II", VERSION, len(cfg)), cfg,
             model.input_stats.to_bytes(), model.target_stats.to_bytes()]
    tensors = model.state_tensors()
    parts.append(struct.pack("<I", len(tensors)))
    for _, t in tensors:
        parts.append(struct.pack(f"<I{t.ndim}I", t.ndim, *t.shape))
        parts.append(np.ascontiguousarray(t, dtype="<f4").tobytes())
    return b"".join(parts)


def save_checkpoint(path, model):
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(checkpoint_bytes(model))
    tmp.replace(path)


def load_checkpoint(path):
    buf = Path(path).read_bytes()
    if buf[:4] != MAGIC:
        raise ValueError(f"{path}: not a RIML checkpoint")
    version, n = struct.unpack_from("<II", buf, 4)
    if version != VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    off = 12
    cfg = ModelConfig.from_text(buf[off:off + n].decode("utf-8"))
    off += n
    in_stats, used = NormStats.from_bytes(buf, off)
    off += used
    tgt_stats, used = NormStats.from_bytes(buf, off)
    off += used
    model = Model(cfg, dtype=np.float32, input_stats=in_stats, target_stats=tgt_stats)
    (count,) = struct.unpack_from("<I", buf, off)
    off += 4
    slots = model.state_tensors()
    if count != len(slots):
        raise ValueError(f"{path}: {count} tensors stored, model declares {len(slots)}")
    for name, dest in slots:
        (rank,) = struct.unpack_from("<I", buf, off)
        shape = struct.unpack_from(f"<{rank}I", buf, off + 4)
        off += 4 + 4 * rank
        if tuple(shape) != dest.shape:
            raise ValueError(f"{path}: tensor {name} has shape {shape}, expected {dest.shape}")
        size = int(np.prod(shape))
        dest[...] = np.frombuffer(buf, dtype="<f4", count=size, offset=off).reshape(shape)
        off += 4 * size
    return model
