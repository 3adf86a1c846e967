"""Stand-in pretraining for the frozen parts.

The decoder learns the target language as a plain LM until dev perplexity
stops improving; the encoder learns masked-frame reconstruction. Both are
then frozen and only the projection and cross-attention stay learnable.
"""
from __future__ import annotations

import logging
import math
from typing import List, Optional, Sequence

import numpy as np

from ..errors import DataError
from ..numerics.ops import cross_entropy, mse_loss
from ..numerics.tensor import no_grad
from ..schemas import ModelConfig, PretrainConfig
from ..train.batches import teacher_forcing_arrays
from ..train.optim import AdamW
from ..utils.seeding import rng_for
from . import layers
from .transformer import AudioToTextModel, build_model, is_learnable_name, pad_frames

logger = logging.getLogger(__name__)


def lm_perplexity(model: AudioToTextModel, sequences: Sequence[Sequence[int]], batch_size: int = 64) -> float:
    """exp(mean token NLL) of the unconditional decoder, EOS included."""
    if not sequences:
        raise DataError("no sequences to score")
    total_nll = 0.0
    total_tokens = 0
    with no_grad():
        for start in range(0, len(sequences), batch_size):
            inputs, labels = teacher_forcing_arrays(sequences[start : start + batch_size], model.config.max_text_len)
            count = int((labels >= 0).sum())
            loss = cross_entropy(model.decode_logits(inputs), labels)
            total_nll += float(loss.data) * count
            total_tokens += count
    return math.exp(total_nll / max(total_tokens, 1))


def _train_lm(model: AudioToTextModel, train: List[List[int]], dev: List[List[int]],
              settings: PretrainConfig, seed: int) -> float:
    names = [n for n in model.params if n.startswith("dec.") and not is_learnable_name(n)]
    model.set_learnable(names)
    opt = AdamW(model.learnable_parameters(), weight_decay=0.0)
    best = lm_perplexity(model, dev)
    best_state = model.snapshot(names)
    stale = 0
    logger.info("pretrain_lm_start sequences=%d dev=%d ppl=%.3f", len(train), len(dev), best)
    for epoch in range(settings.lm_max_epochs):
        rng = rng_for(seed, "pretrain_lm", epoch)
        order = rng.permutation(len(train))
        for start in range(0, len(order), settings.lm_batch_size):
            chunk = [train[i] for i in order[start : start + settings.lm_batch_size]]
            inputs, labels = teacher_forcing_arrays(chunk, model.config.max_text_len)
            opt.zero_grad()
            loss = cross_entropy(model.decode_logits(inputs, training=True, rng=rng), labels)
            loss.backward()
            opt.step(settings.lm_lr)
        ppl = lm_perplexity(model, dev)
        logger.info("pretrain_lm_epoch epoch=%d dev_ppl=%.3f", epoch + 1, ppl)
        if ppl < best * (1.0 - settings.plateau_tol):
            best, best_state, stale = ppl, model.snapshot(names), 0
        else:
            if ppl < best:
                best, best_state = ppl, model.snapshot(names)
            stale += 1
            if stale >= settings.lm_patience:
                break
    model.load_arrays(best_state)
    return best


def _train_encoder(model: AudioToTextModel, frames: Sequence[np.ndarray], settings: PretrainConfig, seed: int) -> float:
    names = [n for n in model.params if n.startswith("enc.")]
    model.set_learnable(names)
    opt = AdamW(model.learnable_parameters(), weight_decay=0.0)
    last = float("nan")
    for epoch in range(settings.enc_epochs):
        rng = rng_for(seed, "pretrain_encoder", epoch)
        order = rng.permutation(len(frames))
        losses = []
        for start in range(0, len(order), settings.enc_batch_size):
            batch, valid = pad_frames([frames[i] for i in order[start : start + settings.enc_batch_size]], model.config)
            masked = (rng.random(valid.shape) < settings.mask_prob) & valid
            for row in range(valid.shape[0]):
                if not masked[row].any():
                    masked[row, int(rng.integers(int(valid[row].sum())))] = True
            opt.zero_grad()
            hidden = model.encode_tensor(batch, valid, masked)
            recon = layers.linear(hidden, model.params, "enc.recon")
            loss = mse_loss(recon, batch, masked.astype(np.float64))
            loss.backward()
            opt.step(settings.enc_lr)
            losses.append(float(loss.data))
        last = float(np.mean(losses))
        logger.info("pretrain_encoder_epoch epoch=%d recon_mse=%.5f", epoch + 1, last)
    return last


def pretrain_frozen_parts(
    config: ModelConfig,
    lm_corpus: Sequence[Sequence[int]],
    enc_corpus: Sequence[np.ndarray],
    seed: int,
    settings: Optional[PretrainConfig] = None,
    lm_dev: Optional[Sequence[Sequence[int]]] = None,
) -> AudioToTextModel:
    if not lm_corpus:
        raise DataError("empty language-model corpus")
    if not enc_corpus:
        raise DataError("empty encoder corpus")
    settings = settings or PretrainConfig()
    model = build_model(config, seed)
    train = [list(s) for s in lm_corpus]
    if lm_dev:
        dev = [list(s) for s in lm_dev]
    else:
        cut = max(1, len(train) // 10)
        dev, train = train[-cut:], train[:-cut] or train
    _train_lm(model, train, dev, settings, seed)
    _train_encoder(model, list(enc_corpus), settings, seed)
    model.set_learnable(n for n in model.params if is_learnable_name(n))
    logger.info("pretrain_done frozen=%d learnable=%d", len(model.partition.frozen), len(model.partition.learnable))
    return model
