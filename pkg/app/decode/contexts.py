"""Scoring contexts: anything that maps token prefixes to next-token log-probabilities."""
from __future__ import annotations

from typing import Dict, Optional, Protocol, Sequence, Tuple

import numpy as np

from ..numerics.ops import stable_log_softmax
from ..numerics.tensor import Tensor, no_grad
from ..utils.seeding import rng_for

EOS_ID = 2


class ScoringContext(Protocol):
    vocab_size: int
    eos_id: int

    def log_probs(self, prefixes: Sequence[Sequence[int]]) -> np.ndarray:
        """N prefixes (without BOS) -> N×V natural-log next-token distribution."""
        ...


class PrefixTableLM:
    """Enumerable toy LM: each prefix gets its own seeded random logits.

    ``min_len`` forbids EOS (log-prob -inf) before that many tokens.
    """

    def __init__(self, vocab_size: int = 3, eos_id: int = 0, seed: int = 0,
                 scale: float = 1.0, min_len: int = 0) -> None:
        self.vocab_size = vocab_size
        self.eos_id = eos_id
        self.seed = seed
        self.scale = scale
        self.min_len = min_len
        self._cache: Dict[Tuple[int, ...], np.ndarray] = {}

    def row(self, prefix: Sequence[int]) -> np.ndarray:
        key = tuple(int(t) for t in prefix)
        hit = self._cache.get(key)
        if hit is None:
            rng = rng_for(self.seed, "prefix_table", *key, len(key))
            logits = rng.normal(0.0, self.scale, size=self.vocab_size)
            if len(key) < self.min_len:
                logits[self.eos_id] = -np.inf
            hit = self._cache[key] = stable_log_softmax(logits)
        return hit

    def log_probs(self, prefixes: Sequence[Sequence[int]]) -> np.ndarray:
        return np.stack([self.row(p) for p in prefixes])

    def sequence_log_prob(self, tokens: Sequence[int]) -> float:
        return float(sum(self.row(tokens[:i])[t] for i, t in enumerate(tokens)))


class FixedSequenceLM:
    """Puts all mass on one continuation, then EOS."""

    def __init__(self, sequence: Sequence[int], vocab_size: int, eos_id: int = EOS_ID) -> None:
        self.sequence = list(sequence)
        self.vocab_size = vocab_size
        self.eos_id = eos_id

    def log_probs(self, prefixes: Sequence[Sequence[int]]) -> np.ndarray:
        out = np.full((len(prefixes), self.vocab_size), -np.inf)
        for i, p in enumerate(prefixes):
            step = len(p)
            nxt = self.sequence[step] if step < len(self.sequence) else self.eos_id
            out[i, nxt] = 0.0
        return out


class ModelContext:
    """Audio-conditioned decoder; the memory is encoded and projected once."""

    def __init__(self, model, frames: Optional[np.ndarray] = None, bos_id: int = 1) -> None:
        self.model = model
        self.vocab_size = model.config.vocab_size_text
        self.eos_id = EOS_ID
        self.bos_id = bos_id
        self._memory: Optional[np.ndarray] = None
        self._valid: Optional[np.ndarray] = None
        if frames is not None:
            encoded, valid = model.encode_batch([frames])
            with no_grad():
                self._memory = model.project(encoded).data
            self._valid = valid

    def log_probs(self, prefixes: Sequence[Sequence[int]]) -> np.ndarray:
        n = len(prefixes)
        out = np.empty((n, self.vocab_size))
        by_len: Dict[int, list] = {}
        for i, p in enumerate(prefixes):
            by_len.setdefault(len(p), []).append(i)
        with no_grad():
            for _, rows in sorted(by_len.items()):
                ids = np.asarray([[self.bos_id] + list(prefixes[i]) for i in rows], dtype=np.int64)
                memory = valid = None
                if self._memory is not None:
                    memory = Tensor(np.repeat(self._memory, len(rows), axis=0))
                    valid = np.repeat(self._valid, len(rows), axis=0)
                logits = self.model.decode_logits(ids, memory, valid).data[:, -1, :]
                out[rows] = stable_log_softmax(logits, axis=-1)
        return out
