"""Batched greedy decoding of many utterances through the audio-to-text model."""
from typing import List, Optional, Sequence

import numpy as np

from ..numerics.ops import stable_log_softmax
from ..numerics.tensor import Tensor, no_grad
from .contexts import EOS_ID
from .strategies import strip_eos

BOS_ID = 1


def decode_batch(model, frames_list: Sequence[np.ndarray], max_len: int,
                 batch_size: int = 64, keep_eos: bool = False,
                 encoded: Optional[Sequence[np.ndarray]] = None) -> List[List[int]]:
    """Greedy decodes, token-for-token equal to decoding each utterance alone.

    ``encoded`` may carry cached encoder outputs (one T×d_audio array per
    utterance) so the frozen encoder is not re-run.
    """
    out: List[List[int]] = []
    max_len = min(max_len, model.config.max_text_len)
    for start in range(0, len(frames_list), batch_size):
        chunk = list(frames_list[start : start + batch_size])
        if encoded is not None:
            enc_chunk = list(encoded[start : start + batch_size])
            t_max = max(e.shape[0] for e in enc_chunk)
            enc = np.zeros((len(enc_chunk), t_max, enc_chunk[0].shape[1]))
            valid = np.zeros((len(enc_chunk), t_max), dtype=bool)
            for i, e in enumerate(enc_chunk):
                enc[i, : e.shape[0]] = e
                valid[i, : e.shape[0]] = True
        else:
            enc, valid = model.encode_batch(chunk)
        with no_grad():
            memory = Tensor(model.project(enc).data)
            n = enc.shape[0]
            ids = np.full((n, 1), BOS_ID, dtype=np.int64)
            done = np.zeros(n, dtype=bool)
            for _ in range(max_len):
                logits = model.decode_logits(ids, memory, valid).data[:, -1, :]
                nxt = np.argmax(stable_log_softmax(logits, axis=-1), axis=-1)
                nxt = np.where(done, EOS_ID, nxt)
                ids = np.concatenate([ids, nxt[:, None]], axis=1)
                done |= nxt == EOS_ID
                if done.all():
                    break
        for row in ids[:, 1:]:
            seq = [int(t) for t in row]
            if EOS_ID in seq:
                seq = seq[: seq.index(EOS_ID) + 1]
            out.append(seq if keep_eos else strip_eos(seq, EOS_ID))
    return out
