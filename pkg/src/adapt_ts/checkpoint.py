"""Checkpoint files.

Layout (little-endian)::

    b"ADCK" | version u32 (=1)
    meta length u32 | meta JSON (UTF-8, sorted keys): model config + training state
    tensor count u32
    per tensor: name length u32 | name | rank u32 | dims u32 * rank | float32 data

Model parameters come first in declaration order, followed by optional
optimizer moments named ``optim.m.<param>`` / ``optim.v.<param>``.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CorruptionError, FormatError
from .model import AdaptModel, ModelConfig
from .optim import AdamWState

MAGIC = b"ADCK"
VERSION = 1


@dataclass
class Checkpoint:
    model: AdaptModel
    state: dict = field(default_factory=dict)
    optim: AdamWState | None = None


def encode_checkpoint(model: AdaptModel, state: dict | None = None, optim: AdamWState | None = None) -> bytes:
    state = dict(state or {})
    if optim is not None:
        state["optim_step"] = optim.step
    meta = json.dumps({"model": model.config.to_dict(), "state": state}, sort_keys=True).encode("utf-8")
    tensors = list(model.params.items())
    if optim is not None:
        tensors += [(f"optim.m.{k}", v) for k, v in optim.m.items()]
        tensors += [(f"optim.v.{k}", v) for k, v in optim.v.items()]
    parts = [MAGIC, struct.pack("<I", VERSION), struct.pack("<I", len(meta)), meta, struct.pack("<I", len(tensors))]
    for name, arr in tensors:
        raw = name.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)) + raw + struct.pack(f"<I{arr.ndim}I", arr.ndim, *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return b"".join(parts)


def save_checkpoint(path: str | Path, model: AdaptModel, state: dict | None = None, optim: AdamWState | None = None) -> None:
    Path(path).write_bytes(encode_checkpoint(model, state, optim))


def load_checkpoint(path: str | Path, dtype=np.float32) -> Checkpoint:
    buf = Path(path).read_bytes()
    src = str(path)
    pos = 0

    def take(n: int) -> bytes:
        nonlocal pos
        if pos + n > len(buf):
            raise CorruptionError(f"{src}: truncated checkpoint at byte {pos}")
        out = buf[pos : pos + n]
        pos += n
        return out

    if take(4) != MAGIC:
        raise FormatError(f"{src}: not a checkpoint (bad magic)")
    (version,) = struct.unpack("<I", take(4))
    if version != VERSION:
        raise FormatError(f"{src}: unsupported checkpoint version {version}")
    (meta_len,) = struct.unpack("<I", take(4))
    try:
        meta = json.loads(take(meta_len).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{src}: unreadable checkpoint metadata") from exc
    (count,) = struct.unpack("<I", take(4))
    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<I", take(4))
        name = take(name_len).decode("utf-8")
        (rank,) = struct.unpack("<I", take(4))
        dims = struct.unpack(f"<{rank}I", take(4 * rank))
        n = int(np.prod(dims)) if rank else 1
        tensors[name] = np.frombuffer(take(4 * n), dtype="<f4").reshape(dims).astype(dtype)
    if pos != len(buf):
        raise CorruptionError(f"{src}: {len(buf) - pos} trailing bytes")
    cfg = ModelConfig(**meta["model"])
    params = {k: v for k, v in tensors.items() if not k.startswith("optim.")}
    model = AdaptModel(cfg, params, dtype=dtype)
    state = meta.get("state", {})
    optim = None
    if "optim_step" in state:
        optim = AdamWState(
            step=int(state["optim_step"]),
            m={k[len("optim.m.") :]: v for k, v in tensors.items() if k.startswith("optim.m.")},
            v={k[len("optim.v.") :]: v for k, v in tensors.items() if k.startswith("optim.v.")},
        )
    return Checkpoint(model, state, optim)
