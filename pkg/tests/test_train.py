import math

import numpy as np
import pytest

from app.errors import ConfigError, ContractError, DataError
from app.model.transformer import build_model
from app.numerics.tensor import parameter
from app.schemas import TrainConfig
from app.train.batches import EOS_ID, make_batches, teacher_forcing_arrays
from app.train.loop import CHECKPOINT_NAME, TRAIN_LOG_NAME, read_train_log, train
from app.train.optim import AdamW, OptimizerState, adamw_step, clip_grad_norm
from app.train.schedule import lr_at, validate_schedule


# -- schedule ----------------------------------------------------------------

def test_warmup_then_linear_decay():
    cfg = TrainConfig(lr_max=1e-4, warmup_steps=200)
    assert lr_at(0, cfg, 1200) == 0.0
    assert math.isclose(lr_at(100, cfg, 1200), 5e-5)
    assert math.isclose(lr_at(200, cfg, 1200), 1e-4)
    assert math.isclose(lr_at(700, cfg, 1200), 5e-5)
    assert lr_at(1200, cfg, 1200) == 0.0


def test_schedule_without_warmup_starts_at_peak():
    cfg = TrainConfig(lr_max=1e-3, warmup_steps=0)
    assert lr_at(0, cfg, 10) == 1e-3


def test_schedule_validation():
    with pytest.raises(ConfigError):
        validate_schedule(TrainConfig(warmup_steps=10), 10)
    with pytest.raises(ConfigError):
        validate_schedule(TrainConfig(lr_max=0.0), 10)
    with pytest.raises(ContractError):
        lr_at(11, TrainConfig(warmup_steps=2), 10)


# -- optimizer ---------------------------------------------------------------

def test_first_adamw_step_moves_by_lr():
    theta = parameter(1.0)
    state = adamw_step({"theta": theta}, {"theta": theta.data.copy()}, OptimizerState(), lr=0.1, weight_decay=0.0)
    assert math.isclose(float(theta.data), 0.9, abs_tol=1e-6)
    assert state.step == 1


def test_decay_alone_shrinks_parameter():
    theta = parameter(2.0)
    adamw_step({"theta": theta}, {"theta": np.zeros(())}, OptimizerState(), lr=0.1, weight_decay=0.5)
    assert math.isclose(float(theta.data), 2.0 * (1 - 0.1 * 0.5))


def test_adamw_minimizes_a_quadratic():
    theta = parameter([3.0, -2.0])
    opt = AdamW({"theta": theta}, weight_decay=0.0)
    for i in range(300):
        opt.zero_grad()
        (theta * theta).sum().backward()
        opt.step(0.05 * (1 - i / 300))
    assert np.all(np.abs(theta.data) < 0.05)


def test_missing_gradient_is_a_contract_error():
    theta = parameter(1.0)
    with pytest.raises(ContractError):
        adamw_step({"theta": theta}, {}, OptimizerState(), lr=0.1, weight_decay=0.0)


def test_clip_grad_norm():
    a, b = parameter([0.0, 0.0]), parameter([0.0])
    a.grad, b.grad = np.array([3.0, 0.0]), np.array([4.0])
    assert clip_grad_norm({"a": a, "b": b}, 1.0) == 5.0
    assert math.isclose(float(np.sqrt((a.grad ** 2).sum() + (b.grad ** 2).sum())), 1.0, rel_tol=1e-9)


# -- batches -----------------------------------------------------------------

def test_teacher_forcing_shift_and_padding():
    inputs, labels = teacher_forcing_arrays([[5, 6, 7], [8]], max_len=10)
    assert inputs.tolist() == [[1, 5, 6, 7], [1, 8, 0, 0]]
    assert labels.tolist() == [[5, 6, 7, EOS_ID], [8, EOS_ID, -100, -100]]


def test_teacher_forcing_truncates_to_max_len():
    inputs, labels = teacher_forcing_arrays([[5, 6, 7, 8]], max_len=3)
    assert inputs.shape == (1, 3)
    assert labels[0, -1] == EOS_ID
    with pytest.raises(DataError):
        teacher_forcing_arrays([], 5)


def test_batches_pair_each_utterance_with_one_of_its_captions(tiny_corpus):
    items = tiny_corpus.train.items
    by_id = {it.item_id: it for it in items}
    batches = make_batches(items, "translation", seed=0, epoch=1, batch_size=5)
    assert [len(b.item_ids) for b in batches] == [5, 5, 2]
    seen = [i for b in batches for i in b.item_ids]
    assert sorted(seen) == sorted(by_id)
    for b in batches:
        for item_id, target in zip(b.item_ids, b.targets):
            assert target in by_id[item_id].captions


def test_batches_are_seeded_by_epoch(tiny_corpus):
    items = tiny_corpus.train.items
    first = make_batches(items, "translation", seed=0, epoch=1, batch_size=4)
    again = make_batches(items, "translation", seed=0, epoch=1, batch_size=4)
    other = make_batches(items, "translation", seed=0, epoch=2, batch_size=4)
    assert [b.item_ids for b in first] == [b.item_ids for b in again]
    assert [b.item_ids for b in first] != [b.item_ids for b in other]


def test_k_captions_and_reference_targets(tiny_corpus):
    items = tiny_corpus.train.items
    for b in make_batches(items, "translation", seed=0, epoch=1, batch_size=4, k_captions=1):
        for item_id, target in zip(b.item_ids, b.targets):
            item = next(it for it in items if it.item_id == item_id)
            assert target == item.captions[0]
    for b in make_batches(items, "translation", seed=0, epoch=1, batch_size=4, targets="references"):
        for item_id, target in zip(b.item_ids, b.targets):
            item = next(it for it in items if it.item_id == item_id)
            assert target == item.references[item.template_id]


def test_batch_size_must_be_positive(tiny_corpus):
    with pytest.raises(DataError):
        make_batches(tiny_corpus.train.items, "translation", seed=0, epoch=1, batch_size=0)


# -- loop --------------------------------------------------------------------

def test_training_changes_only_learnable_parameters(tiny_corpus, corpus_model_config, smoke_train_config, tmp_path):
    model = build_model(corpus_model_config, seed=0)
    frozen = model.snapshot(model.partition.frozen)
    learnable = model.snapshot(model.partition.learnable)
    result = train(model, tiny_corpus, smoke_train_config, run_dir=tmp_path)
    for name, before in frozen.items():
        assert np.array_equal(result.model.params[name].data, before)
    assert any(not np.array_equal(result.model.params[n].data, v) for n, v in learnable.items())
    assert (tmp_path / CHECKPOINT_NAME).exists()


def test_training_log_records_every_step(tiny_corpus, corpus_model_config, smoke_train_config, tmp_path):
    result = train(build_model(corpus_model_config, seed=0), tiny_corpus, smoke_train_config, run_dir=tmp_path)
    log = result.log
    assert [s.step for s in log.steps] == list(range(1, 10))
    assert log.steps[-1].lr == 0.0
    assert [e.epoch for e in log.epochs] == [1, 2, 3]
    best = min(log.epochs, key=lambda e: e.dev_metric)
    assert log.best_epoch == best.epoch
    assert result.checkpoint.meta.epoch == best.epoch
    assert read_train_log(tmp_path / TRAIN_LOG_NAME) == log


def test_training_loss_goes_down(tiny_corpus, corpus_model_config):
    config = TrainConfig(lr_max=1e-2, warmup_steps=3, epochs=8, batch_size=4, seed=0, selection="loss")
    log = train(build_model(corpus_model_config, seed=0), tiny_corpus, config).log
    assert log.epochs[-1].train_loss < log.epochs[0].train_loss


def test_training_is_reproducible(tiny_corpus, corpus_model_config, smoke_train_config):
    a = train(build_model(corpus_model_config, seed=0), tiny_corpus, smoke_train_config)
    b = train(build_model(corpus_model_config, seed=0), tiny_corpus, smoke_train_config)
    assert [s.loss for s in a.log.steps] == [s.loss for s in b.log.steps]


def test_bleu_selection_runs(tiny_corpus, corpus_model_config, smoke_train_config):
    config = smoke_train_config.model_copy(update={"selection": "bleu", "epochs": 2})
    result = train(build_model(corpus_model_config, seed=0), tiny_corpus, config, decode_max_len=8)
    assert result.log.criterion == "bleu"
    assert all(0.0 <= e.dev_metric <= 100.0 for e in result.log.epochs)


def test_train_config_validation(tiny_corpus, corpus_model_config):
    model = build_model(corpus_model_config, seed=0)
    with pytest.raises(ConfigError):
        train(model, tiny_corpus, TrainConfig(epochs=0))
    with pytest.raises(ConfigError):
        train(model, tiny_corpus, TrainConfig(epochs=1, batch_size=4, warmup_steps=200))
