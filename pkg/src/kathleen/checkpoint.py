"""Binary checkpoint format.

Layout (all integers unsigned 32-bit little-endian)::

    b"KATH"
    version
    config_len, config_text (UTF-8, ``model.key=value`` lines)
    repeated until end of file:
        name_len, name (UTF-8), rank, dims[rank], float32 LE data (row-major)

Tensors are written in the model's parameter order, so save -> load -> save
reproduces the file byte for byte.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np

from .config import ConfigError, ModelConfig, model_config_from_text, model_config_to_text

MAGIC = b"KATH"
VERSION = 1
_U32 = struct.Struct("<I")
_F32 = np.dtype("<f4")


class CheckpointError(ValueError):
    """Unreadable, corrupt or mismatched checkpoint."""


@dataclass
class Checkpoint:
    config: ModelConfig
    tensors: dict[str, np.ndarray]  # insertion order is file order


def to_bytes(config: ModelConfig, tensors: dict[str, np.ndarray]) -> bytes:
    parts = [MAGIC, _U32.pack(VERSION)]
    text = model_config_to_text(config).encode("utf-8")
    parts += [_U32.pack(len(text)), text]
    for name, value in tensors.items():
        arr = np.asarray(value, dtype=_F32, order="C")  # keeps rank 0, unlike ascontiguousarray
        raw = name.encode("utf-8")
        parts += [_U32.pack(len(raw)), raw, _U32.pack(arr.ndim)]
        parts += [_U32.pack(n) for n in arr.shape]
        parts.append(arr.tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, buf: bytes):
        self.buf, self.pos = buf, 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.buf):
            raise CheckpointError(f"truncated checkpoint while reading {what} at offset {self.pos}")
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def u32(self, what: str) -> int:
        return _U32.unpack(self.take(4, what))[0]

    @property
    def done(self) -> bool:
        return self.pos >= len(self.buf)


def from_bytes(buf: bytes) -> Checkpoint:
    r = _Reader(buf)
    magic = r.take(4, "magic")
    if magic != MAGIC:
        raise CheckpointError(f"bad magic {magic!r}, expected {MAGIC!r}")
    version = r.u32("version")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version} (supported: {VERSION})")
    text = r.take(r.u32("config length"), "config block")
    try:
        config = model_config_from_text(text.decode("utf-8"))
    except (UnicodeDecodeError, ConfigError) as exc:
        raise CheckpointError(f"bad config block: {exc}") from None
    tensors: dict[str, np.ndarray] = {}
    while not r.done:
        try:
            name = r.take(r.u32("name length"), "tensor name").decode("utf-8")
        except UnicodeDecodeError:
            raise CheckpointError(f"tensor name at offset {r.pos} is not UTF-8") from None
        if name in tensors:
            raise CheckpointError(f"duplicate tensor {name!r}")
        rank = r.u32(f"rank of {name}")
        shape = tuple(r.u32(f"dims of {name}") for _ in range(rank))
        count = int(np.prod(shape, dtype=np.int64))
        data = r.take(count * 4, f"data of {name}")
        tensors[name] = np.frombuffer(data, dtype=_F32).reshape(shape).copy()
    return Checkpoint(config, tensors)


def save(path: Union[str, Path], config: ModelConfig, tensors: dict[str, np.ndarray]) -> None:
    Path(path).write_bytes(to_bytes(config, tensors))


def load(path: Union[str, Path]) -> Checkpoint:
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"checkpoint not found: {path}")
    return from_bytes(path.read_bytes())


def save_model(path, model) -> None:
    save(path, model.cfg, model.state_dict())


def load_model(path, seed: int = 0):
    """Rebuild the model from the stored config and load its weights."""
    from .model import KathleenModel

    ckpt = load(path)
    model = KathleenModel(ckpt.config, seed=seed)
    try:
        model.load_state_dict(ckpt.tensors)
    except ValueError as exc:
        raise CheckpointError(str(exc)) from None
    return model
