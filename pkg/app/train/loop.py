"""Adapter training: teacher-forced caption loss on cached encoder outputs.

The encoder is frozen, so every utterance is encoded once before the first
epoch; each step only runs the projection and the decoder.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..decode.batch import decode_batch
from ..errors import ConfigError, TrainingError
from ..metrics.bleu import corpus_bleu
from ..model.checkpoint import Checkpoint, init_from_checkpoint, load_checkpoint, save_checkpoint
from ..model.transformer import AudioToTextModel
from ..numerics.ops import cross_entropy
from ..numerics.tensor import Tensor, no_grad
from ..schemas import CheckpointMeta, DatasetItem, EpochRecord, StepRecord, TrainConfig, TrainLog
from ..utils.records import iter_records, write_records
from ..utils.seeding import rng_for
from .batches import make_batches, teacher_forcing_arrays
from .optim import AdamW, clip_grad_norm
from .schedule import lr_at, validate_schedule

logger = logging.getLogger(__name__)

TRAIN_LOG_NAME = "train_log.jsonl"
CHECKPOINT_NAME = "best.ckpt"


@dataclass
class TrainResult:
    model: AudioToTextModel
    checkpoint: Checkpoint
    log: TrainLog


def validate_train_config(config: TrainConfig) -> None:
    for name in ("epochs", "batch_size"):
        if getattr(config, name) < 1:
            raise ConfigError(name, "must be >= 1")
    if config.weight_decay < 0:
        raise ConfigError("weight_decay", "must be >= 0")
    if config.grad_clip < 0:
        raise ConfigError("grad_clip", "must be >= 0")
    if config.k_captions is not None and config.k_captions < 1:
        raise ConfigError("k_captions", "must be >= 1")


def encode_items(model: AudioToTextModel, split, items: Sequence[DatasetItem],
                 batch_size: int = 64) -> Dict[str, np.ndarray]:
    """Frozen-encoder outputs per item id, unpadded."""
    out: Dict[str, np.ndarray] = {}
    for start in range(0, len(items), batch_size):
        chunk = items[start : start + batch_size]
        frames = [split.frames(it) for it in chunk]
        enc, _ = model.encode_batch(frames)
        for it, f, e in zip(chunk, frames, enc):
            out[it.item_id] = e[: f.shape[0]].copy()
    return out


def stack_encoded(encoded: Sequence[np.ndarray]) -> Tuple[np.ndarray, np.ndarray]:
    t_max = max(e.shape[0] for e in encoded)
    batch = np.zeros((len(encoded), t_max, encoded[0].shape[1]))
    valid = np.zeros((len(encoded), t_max), dtype=bool)
    for i, e in enumerate(encoded):
        batch[i, : e.shape[0]] = e
        valid[i, : e.shape[0]] = True
    return batch, valid


def batch_loss(model: AudioToTextModel, encoded: Sequence[np.ndarray], targets: Sequence[Sequence[int]],
               training: bool = False, rng: Optional[np.random.Generator] = None) -> Tensor:
    enc, valid = stack_encoded(encoded)
    inputs, labels = teacher_forcing_arrays(targets, model.config.max_text_len)
    memory = model.project(enc)
    return cross_entropy(model.decode_logits(inputs, memory, valid, training=training, rng=rng), labels)


def dev_bleu(model: AudioToTextModel, items: Sequence[DatasetItem], cache: Dict[str, np.ndarray],
             max_len: int) -> float:
    encoded = [cache[it.item_id] for it in items]
    hyps = decode_batch(model, encoded, max_len, encoded=encoded)
    return corpus_bleu([(h, it.references) for h, it in zip(hyps, items)]).score


def dev_loss(model: AudioToTextModel, items: Sequence[DatasetItem], cache: Dict[str, np.ndarray],
             config: TrainConfig) -> float:
    batches = make_batches(items, config.mode, config.seed, 0, config.batch_size, config.targets, config.k_captions)
    total = 0.0
    count = 0
    with no_grad():
        for b in batches:
            loss = batch_loss(model, [cache[i] for i in b.item_ids], b.targets)
            total += float(loss.data) * len(b.targets)
            count += len(b.targets)
    return total / max(count, 1)


def _improved(value: float, best: Optional[float], criterion: str) -> bool:
    if best is None:
        return True
    return value > best if criterion == "bleu" else value < best


def train(model: AudioToTextModel, corpus, config: TrainConfig,
          run_dir: Optional[Union[str, Path]] = None, decode_max_len: int = 20,
          init: Optional[Checkpoint] = None) -> TrainResult:
    """Train the learnable partition and restore the best epoch by dev metric.

    ``init`` (or the file named by ``config.init_checkpoint``) seeds the
    learnable parameters, e.g. a translation run starting from the best
    paraphrase run.
    """
    validate_train_config(config)
    if init is None and config.init_checkpoint:
        init = load_checkpoint(config.init_checkpoint)
    if init is not None:
        init_from_checkpoint(model, init)
    train_items = list(corpus.train.items)
    dev_items = list(corpus.dev.items)
    steps_per_epoch = math.ceil(len(train_items) / config.batch_size)
    total_steps = config.epochs * steps_per_epoch
    validate_schedule(config, total_steps)

    cache = encode_items(model, corpus.train, train_items)
    cache.update(encode_items(model, corpus.dev, dev_items))
    params = model.learnable_parameters()
    opt = AdamW(params, weight_decay=config.weight_decay, betas=(config.beta1, config.beta2), eps=config.eps)
    rng = rng_for(config.seed, "train", "dropout")
    log = TrainLog(criterion=config.selection)
    best_metric: Optional[float] = None
    best_state = model.snapshot(params)
    logger.info("train_start mode=%s items=%d steps=%d learnable=%d",
                config.mode, len(train_items), total_steps, model.partition.learnable_count)

    step = 0
    for epoch in range(1, config.epochs + 1):
        batches = make_batches(train_items, config.mode, config.seed, epoch, config.batch_size,
                               config.targets, config.k_captions)
        losses: List[float] = []
        for b in batches:
            opt.zero_grad()
            loss = batch_loss(model, [cache[i] for i in b.item_ids], b.targets, training=True, rng=rng)
            value = float(loss.data)
            if not math.isfinite(value):
                raise TrainingError(step + 1, f"loss is {value}")
            loss.backward()
            norm = clip_grad_norm(params, config.grad_clip)
            if not math.isfinite(norm):
                raise TrainingError(step + 1, f"gradient norm is {norm}")
            step += 1
            lr = lr_at(step, config, total_steps)
            opt.step(lr)
            losses.append(value)
            log.steps.append(StepRecord(step=step, lr=lr, loss=value))
        if config.selection == "bleu":
            metric = dev_bleu(model, dev_items, cache, decode_max_len)
        else:
            metric = dev_loss(model, dev_items, cache, config)
        train_loss = float(np.mean(losses))
        log.epochs.append(EpochRecord(epoch=epoch, train_loss=train_loss, dev_metric=metric))
        logger.info("epoch=%d train_loss=%.4f dev_%s=%.4f", epoch, train_loss, config.selection, metric)
        if _improved(metric, best_metric, config.selection):
            best_metric = metric
            best_state = model.snapshot(params)
            log.best_epoch = epoch

    model.load_arrays(best_state)
    meta = CheckpointMeta(epoch=log.best_epoch or 0, dev_metric=best_metric, seed=config.seed, mode=config.mode)
    checkpoint = Checkpoint.from_model(model, meta)
    if run_dir is not None:
        out = Path(run_dir)
        save_checkpoint(model, out / CHECKPOINT_NAME, meta)
        write_train_log(out / TRAIN_LOG_NAME, log)
    logger.info("train_done best_epoch=%s best_%s=%s", log.best_epoch, config.selection, best_metric)
    return TrainResult(model=model, checkpoint=checkpoint, log=log)


def write_train_log(path: Union[str, Path], log: TrainLog) -> int:
    rows = [{"kind": "step", **s.model_dump()} for s in log.steps]
    rows += [{"kind": "epoch", **e.model_dump()} for e in log.epochs]
    rows.append({"kind": "summary", "criterion": log.criterion, "best_epoch": log.best_epoch})
    return write_records(path, rows)


def read_train_log(path: Union[str, Path]) -> TrainLog:
    log = TrainLog()
    for rec in iter_records(path):
        kind = rec.pop("kind", None)
        if kind == "step":
            log.steps.append(StepRecord(**rec))
        elif kind == "epoch":
            log.epochs.append(EpochRecord(**rec))
        elif kind == "summary":
            log.criterion = rec["criterion"]
            log.best_epoch = rec["best_epoch"]
    return log
