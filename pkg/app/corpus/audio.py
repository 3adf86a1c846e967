"""Simulated speech: per-token prototype frames with seeded durations and Gaussian noise.

Audio files hold a fixed header followed by raw little-endian float64 data::

    magic  b"VGSA"   4 bytes
    version          u32
    frames (T)       u32
    width (d)        u32
    data             T*d <f8, row major
"""
from __future__ import annotations

import logging
import struct
from pathlib import Path
from typing import List, Optional, Sequence, Union

import numpy as np

from ..errors import FormatError, VocabularyError
from ..schemas import AudioFeatures, Utterance
from ..utils.seeding import rng_for

logger = logging.getLogger(__name__)

AUDIO_MAGIC = b"VGSA"
AUDIO_VERSION = 1
_HEADER = struct.Struct("<4sIII")

PROTOTYPE_STD = 0.25
MIN_DURATION, MAX_DURATION = 2, 4


class AudioPrototypes:
    """One fixed d_audio vector per vocabulary id, drawn once per corpus."""

    def __init__(self, vocab_size: int, d_audio: int, seed: int) -> None:
        self.d_audio = d_audio
        self.table = rng_for(seed, "prototypes").normal(0.0, PROTOTYPE_STD, size=(vocab_size, d_audio))

    def __len__(self) -> int:
        return self.table.shape[0]

    def vector(self, token_id: int) -> np.ndarray:
        if not 0 <= token_id < len(self):
            raise VocabularyError(f"no audio prototype for token {token_id}")
        return self.table[token_id]

    def nearest(self, frames: np.ndarray, candidates: Optional[Sequence[int]] = None) -> np.ndarray:
        """Per-frame id of the closest prototype (restricted to ``candidates`` if given)."""
        ids = np.arange(len(self)) if candidates is None else np.asarray(candidates)
        table = self.table[ids]
        d2 = (frames ** 2).sum(-1)[:, None] - 2.0 * frames @ table.T + (table ** 2).sum(-1)[None, :]
        return ids[np.argmin(d2, axis=1)]


def synthesize_audio(utterance: Utterance, seed: int, noise_sigma: float, prototypes: AudioPrototypes,
                     frame_rate: int = 50, durations: Optional[Sequence[int]] = None) -> AudioFeatures:
    rng = rng_for(seed, "audio", utterance.scene_id, utterance.language, utterance.template_id)
    tokens = list(utterance.tokens)
    if durations is None:
        durations = [int(d) for d in rng.integers(MIN_DURATION, MAX_DURATION + 1, size=len(tokens))]
    elif len(durations) != len(tokens):
        raise FormatError("one duration per token is required")
    rows: List[np.ndarray] = []
    for tok, dur in zip(tokens, durations):
        rows.append(np.repeat(prototypes.vector(int(tok))[None, :], int(dur), axis=0))
    frames = np.concatenate(rows, axis=0) if rows else np.zeros((0, prototypes.d_audio))
    if noise_sigma > 0:
        frames = frames + rng.normal(0.0, noise_sigma, size=frames.shape)
    return AudioFeatures(scene_id=utterance.scene_id, frames=frames,
                         durations=[int(d) for d in durations], frame_rate=frame_rate)


def collapse_runs(frame_ids: Sequence[int], durations: Sequence[int]) -> List[int]:
    """Token sequence from per-frame ids given the segment durations (majority per segment)."""
    out: List[int] = []
    pos = 0
    for dur in durations:
        seg = list(frame_ids[pos : pos + dur])
        pos += dur
        out.append(max(set(seg), key=lambda t: (seg.count(t), -t)))
    return out


def encode_audio(frames: np.ndarray) -> bytes:
    if frames.ndim != 2:
        raise FormatError("audio frames must be a T×d matrix")
    data = np.ascontiguousarray(frames, dtype="<f8")
    return _HEADER.pack(AUDIO_MAGIC, AUDIO_VERSION, data.shape[0], data.shape[1]) + data.tobytes()


def decode_audio(blob: bytes, source: str = "<bytes>") -> np.ndarray:
    if len(blob) < _HEADER.size:
        raise FormatError(f"{source}: truncated audio header")
    magic, version, t, d = _HEADER.unpack_from(blob)
    if magic != AUDIO_MAGIC:
        raise FormatError(f"{source}: not an audio feature file")
    if version != AUDIO_VERSION:
        raise FormatError(f"{source}: unsupported audio format version {version}")
    body = blob[_HEADER.size :]
    if len(body) != t * d * 8:
        raise FormatError(f"{source}: expected {t * d * 8} data bytes, found {len(body)}")
    return np.frombuffer(body, dtype="<f8").reshape(t, d).astype(np.float64)


def write_audio(path: Union[str, Path], frames: np.ndarray) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_bytes(encode_audio(frames))
    return p


def read_audio(path: Union[str, Path]) -> np.ndarray:
    p = Path(path)
    return decode_audio(p.read_bytes(), str(p))
