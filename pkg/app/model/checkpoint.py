"""Binary checkpoint format.

Layout (little-endian):
    magic           8 bytes  b"VGSCKPT\\x00"
    version         u32
    config          u32 length + canonical JSON (sorted keys)
    metadata        u32 length + canonical JSON
    record count    u32
    records         u32 name length, name (UTF-8), u32 rank, rank × u64 dims, float64 data
    checksum        32-byte SHA-256 over everything before it
"""
from __future__ import annotations

import hashlib
import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Union

import numpy as np

from ..errors import ChecksumError, CompatibilityError, FormatError
from ..numerics.tensor import Tensor
from ..schemas import CheckpointMeta, ModelConfig
from .transformer import AudioToTextModel

logger = logging.getLogger(__name__)

MAGIC = b"VGSCKPT\x00"
FORMAT_VERSION = 1
_DIGEST = 32


def _canonical(obj: dict) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


@dataclass
class Checkpoint:
    config: ModelConfig
    params: Dict[str, np.ndarray]
    learnable: List[str]
    meta: CheckpointMeta = field(default_factory=CheckpointMeta)

    @classmethod
    def from_model(cls, model: AudioToTextModel, meta: CheckpointMeta | None = None) -> "Checkpoint":
        return cls(
            config=model.config.model_copy(),
            params=model.snapshot(),
            learnable=sorted(model.partition.learnable),
            meta=meta or CheckpointMeta(),
        )

    def to_model(self) -> AudioToTextModel:
        params = {n: Tensor(np.array(a, copy=True)) for n, a in self.params.items()}
        return AudioToTextModel(self.config.model_copy(), params, self.learnable)

    # -- serialization ----------------------------------------------------
    def to_bytes(self) -> bytes:
        meta = self.meta.model_dump(mode="json")
        meta["learnable"] = list(self.learnable)
        parts = [MAGIC, struct.pack("<I", FORMAT_VERSION)]
        for blob in (_canonical(self.config.model_dump(mode="json")), _canonical(meta)):
            parts += [struct.pack("<I", len(blob)), blob]
        names = sorted(self.params)
        parts.append(struct.pack("<I", len(names)))
        for name in names:
            arr = np.ascontiguousarray(self.params[name], dtype="<f8")
            encoded = name.encode("utf-8")
            parts += [struct.pack("<I", len(encoded)), encoded, struct.pack("<I", arr.ndim)]
            parts.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
            parts.append(arr.tobytes(order="C"))
        body = b"".join(parts)
        return body + hashlib.sha256(body).digest()

    @classmethod
    def from_bytes(cls, raw: bytes) -> "Checkpoint":
        if len(raw) < len(MAGIC) + 4 + _DIGEST or raw[: len(MAGIC)] != MAGIC:
            raise FormatError("not a checkpoint (bad magic)")
        body, digest = raw[:-_DIGEST], raw[-_DIGEST:]
        if hashlib.sha256(body).digest() != digest:
            raise ChecksumError("checkpoint checksum mismatch")
        reader = _Reader(body, len(MAGIC))
        version = reader.u32()
        if version != FORMAT_VERSION:
            raise FormatError(f"unsupported checkpoint version {version}")
        config = ModelConfig(**json.loads(reader.blob()))
        meta_raw = json.loads(reader.blob())
        learnable = list(meta_raw.pop("learnable", []))
        params: Dict[str, np.ndarray] = {}
        for _ in range(reader.u32()):
            name = reader.blob().decode("utf-8")
            rank = reader.u32()
            dims = struct.unpack_from(f"<{rank}Q", body, reader.take(8 * rank))
            count = int(np.prod(dims)) if rank else 1
            start = reader.take(8 * count)
            params[name] = np.frombuffer(body, dtype="<f8", count=count, offset=start).astype(np.float64).reshape(dims)
        if reader.pos != len(body):
            raise FormatError("trailing bytes after parameter records")
        return cls(config=config, params=params, learnable=learnable, meta=CheckpointMeta(**meta_raw))


class _Reader:
    def __init__(self, buf: bytes, pos: int) -> None:
        self.buf = buf
        self.pos = pos

    def take(self, n: int) -> int:
        if self.pos + n > len(self.buf):
            raise FormatError("truncated checkpoint")
        start = self.pos
        self.pos += n
        return start

    def u32(self) -> int:
        return struct.unpack_from("<I", self.buf, self.take(4))[0]

    def blob(self) -> bytes:
        n = self.u32()
        start = self.take(n)
        return self.buf[start : start + n]


def save_checkpoint(model: AudioToTextModel, path: Union[str, Path], meta: CheckpointMeta | None = None) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_bytes(Checkpoint.from_model(model, meta).to_bytes())
    logger.info("checkpoint_saved path=%s", p)
    return p


def load_checkpoint(path: Union[str, Path]) -> Checkpoint:
    p = Path(path)
    try:
        raw = p.read_bytes()
    except OSError as exc:
        raise FormatError(f"cannot read checkpoint {p}: {exc}") from exc
    return Checkpoint.from_bytes(raw)


def init_from_checkpoint(model: AudioToTextModel, checkpoint: Checkpoint) -> AudioToTextModel:
    """Copy the checkpoint's learnable values into ``model``.

    The configs must match field for field and every frozen parameter must be
    byte-identical; otherwise :class:`CompatibilityError` lists the culprits.
    """
    ours = model.config.model_dump()
    theirs = checkpoint.config.model_dump()
    diff = sorted(k for k in set(ours) | set(theirs) if ours.get(k) != theirs.get(k))
    if diff:
        raise CompatibilityError(diff, "config mismatch")
    part = model.partition
    mismatched = [
        name for name in sorted(part.frozen)
        if name not in checkpoint.params or not np.array_equal(model.params[name].data, checkpoint.params[name])
    ]
    if mismatched:
        raise CompatibilityError(mismatched, "frozen parameters differ")
    absent = sorted(n for n in part.learnable if n not in checkpoint.params)
    if absent:
        raise CompatibilityError(absent, "learnable parameters missing from checkpoint")
    model.load_arrays({n: checkpoint.params[n] for n in part.learnable})
    logger.info("init_from_checkpoint learnable=%d epoch=%s", len(part.learnable), checkpoint.meta.epoch)
    return model
