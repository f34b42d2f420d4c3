"""Binary checkpoint format.

Layout (all integers little-endian):

========  =======================================================
bytes     meaning
========  =======================================================
8         magic ``WSTGCKPT``
u32       format version (1)
u8 + n    stage tag length, then UTF-8 bytes (``coarse``/``fine``)
u32       epoch
u32 + n   config snapshot length, then UTF-8 key=value lines
u32       parameter count
========  =======================================================

followed by each parameter, sorted by name:

========  =======================================================
u16 + n   name length, then UTF-8 bytes
u8        rank
u32 each  one extent per rank dimension
f64 each  row-major values
========  =======================================================

Writing sorts parameters by name and uses canonical encodings, so
``save(load(path))`` reproduces the file byte for byte.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import CheckpointError

MAGIC = b"WSTGCKPT"
VERSION = 1
STAGES = ("coarse", "fine")


@dataclass
class Checkpoint:
    stage: str
    epoch: int
    config_text: str
    params: dict[str, np.ndarray]


def save_checkpoint(path: str | Path, ckpt: Checkpoint) -> None:
    if ckpt.stage not in STAGES:
        raise CheckpointError(f"unknown stage tag {ckpt.stage!r}")
    stage_b = ckpt.stage.encode()
    config_b = ckpt.config_text.encode()
    parts = [MAGIC, struct.pack("<I", VERSION),
             struct.pack("<B", len(stage_b)), stage_b,
             struct.pack("<I", ckpt.epoch),
             struct.pack("<I", len(config_b)), config_b,
             struct.pack("<I", len(ckpt.params))]
    for name in sorted(ckpt.params):
        arr = np.ascontiguousarray(ckpt.params[name], dtype="<f8")
        name_b = name.encode()
        parts.append(struct.pack("<H", len(name_b)))
        parts.append(name_b)
        parts.append(struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes())
    Path(path).write_bytes(b"".join(parts))


class _Reader:
    def __init__(self, blob: bytes, source: str):
        self.blob = blob
        self.pos = 0
        self.source = source

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise CheckpointError(f"{self.source}: truncated at byte {self.pos}")
        out = self.blob[self.pos : self.pos + n]
        self.pos += n
        return out

    def u(self, fmt: str) -> int:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))[0]


def load_checkpoint(path: str | Path) -> Checkpoint:
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    r = _Reader(blob, str(path))
    if r.take(8) != MAGIC:
        raise CheckpointError(f"{path}: bad magic, not a checkpoint")
    version = r.u("<I")
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    stage = r.take(r.u("<B")).decode()
    if stage not in STAGES:
        raise CheckpointError(f"{path}: unknown stage tag {stage!r}")
    epoch = r.u("<I")
    config_text = r.take(r.u("<I")).decode()
    count = r.u("<I")
    params: dict[str, np.ndarray] = {}
    for _ in range(count):
        name = r.take(r.u("<H")).decode()
        rank = r.u("<B")
        shape = tuple(r.u("<I") for _ in range(rank))
        n_values = int(np.prod(shape)) if shape else 1
        data = np.frombuffer(r.take(8 * n_values), dtype="<f8").reshape(shape)
        params[name] = data.copy()
    if r.pos != len(blob):
        raise CheckpointError(f"{path}: {len(blob) - r.pos} trailing bytes")
    return Checkpoint(stage=stage, epoch=epoch, config_text=config_text, params=params)
