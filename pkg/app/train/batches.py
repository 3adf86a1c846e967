"""Teacher-forcing arrays and the per-epoch audio/caption pairing."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ..errors import DataError
from ..numerics.ops import IGNORE_INDEX
from ..utils.seeding import rng_for

logger = logging.getLogger(__name__)

PAD_ID = 0
BOS_ID = 1
EOS_ID = 2


def teacher_forcing_arrays(targets: Sequence[Sequence[int]], max_len: int) -> Tuple[np.ndarray, np.ndarray]:
    """Inputs ``[BOS] + y`` and labels ``y + [EOS]``, right-padded.

    Labels on padding are ``IGNORE_INDEX``; sequences longer than ``max_len``
    (EOS included) are truncated.
    """
    if not targets:
        raise DataError("no target sequences")
    rows = [list(t)[: max_len - 1] for t in targets]
    length = max(len(r) for r in rows) + 1
    inputs = np.full((len(rows), length), PAD_ID, dtype=np.int64)
    labels = np.full((len(rows), length), IGNORE_INDEX, dtype=np.int64)
    for i, r in enumerate(rows):
        inputs[i, 0] = BOS_ID
        inputs[i, 1 : len(r) + 1] = r
        labels[i, : len(r)] = r
        labels[i, len(r)] = EOS_ID
    return inputs, labels


@dataclass
class Batch:
    """Parallel lists: the utterance each audio comes from and the text it is trained to emit."""
    item_ids: List[str]
    targets: List[List[int]]


def make_batches(
    dataset: Sequence,
    mode: str,
    seed: int,
    epoch: int,
    batch_size: int = 16,
    targets: str = "captions",
    k_captions: Optional[int] = None,
) -> List[Batch]:
    """Pair every utterance with one uniformly drawn caption, shuffle, and chunk.

    In paraphrase mode a scene's five utterances each draw independently, so
    five of the 25 audio/caption combinations are used per epoch. Randomness
    is salted by ``(seed, epoch)``.
    """
    if batch_size <= 0:
        raise DataError("batch_size must be positive")
    rng = rng_for(seed, "make_batches", mode, epoch)
    pairs: List[Tuple[str, List[int]]] = []
    for item in dataset:
        if targets == "references":
            # supervised topline: the utterance's own ground-truth realization
            own = item.own_reference
            pool = [item.references[own]] if own is not None else []
        else:
            pool = list(item.captions if k_captions is None else item.captions[:k_captions])
        if not pool:
            raise DataError(f"item {item.item_id} has no {targets} to train on")
        pick = int(rng.integers(len(pool))) if len(pool) > 1 else 0
        pairs.append((item.item_id, list(pool[pick])))
    order = rng.permutation(len(pairs))
    batches = []
    for start in range(0, len(order), batch_size):
        chunk = [pairs[i] for i in order[start : start + batch_size]]
        batches.append(Batch(item_ids=[c[0] for c in chunk], targets=[c[1] for c in chunk]))
    logger.debug("make_batches epoch=%d pairs=%d batches=%d", epoch, len(pairs), len(batches))
    return batches
