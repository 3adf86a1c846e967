import math

import numpy as np
import pytest

from app.errors import (
    ChecksumError,
    CompatibilityError,
    ConfigError,
    DataError,
    DimensionError,
    FormatError,
    LengthError,
)
from app.model import layers
from app.model.checkpoint import Checkpoint, init_from_checkpoint, load_checkpoint, save_checkpoint
from app.model.pretrain import lm_perplexity, pretrain_frozen_parts
from app.model.transformer import (
    BOS_ID,
    build_model,
    count_parameters,
    forward,
    is_learnable_name,
    learnable_count_formula,
    pad_frames,
)
from app.numerics.gradcheck import check_gradients
from app.numerics.ops import cross_entropy
from app.schemas import CheckpointMeta, ModelConfig, PretrainConfig


def _audio(config, frames=5, seed=0):
    return np.random.default_rng(seed).normal(size=(frames, config.d_audio))


def _wake_cross_attention(model, seed=1):
    """Give the zero-initialized cross-attention outputs some weight."""
    rng = np.random.default_rng(seed)
    for name, p in model.params.items():
        if ".xattn.wo." in name:
            p.data = rng.normal(0.0, 0.3, size=p.data.shape)


def test_partition_names_and_fraction(tiny_model):
    part = tiny_model.partition
    assert part.learnable
    assert all(is_learnable_name(n) for n in part.learnable)
    assert not any(is_learnable_name(n) for n in part.frozen)
    assert part.learnable_count + sum(tiny_model.params[n].data.size for n in part.frozen) == part.total
    total, learnable, fraction = count_parameters(tiny_model)
    assert fraction == learnable / total


def test_learnable_count_matches_formula(tiny_model, tiny_config):
    _, learnable, _ = count_parameters(tiny_model)
    assert learnable == learnable_count_formula(tiny_config.d_audio, tiny_config.d_text, tiny_config.n_blocks)


def test_formula_at_large_dimensions_is_near_29m():
    count = learnable_count_formula(1920, 768, 12)
    assert count == 29_842_176
    assert abs(count - 29e6) / 29e6 < 0.10
    assert 0.012 < count / 2.3e9 < 0.014


def test_default_config_keeps_most_parameters_frozen():
    _, _, fraction = count_parameters(build_model(ModelConfig(), seed=0))
    assert fraction < 0.25


def test_build_is_deterministic(tiny_config):
    a = build_model(tiny_config, seed=4)
    b = build_model(tiny_config, seed=4)
    assert all(np.array_equal(a.params[n].data, b.params[n].data) for n in a.params)


def test_invalid_head_split_rejected(tiny_config):
    with pytest.raises(ConfigError):
        build_model(tiny_config.model_copy(update={"n_heads": 3}), seed=0)


def test_zero_init_reproduces_frozen_lm(tiny_model, tiny_config):
    prefix = [BOS_ID, 5, 7, 3]
    conditioned = forward(tiny_model, _audio(tiny_config), prefix).data
    unconditioned = tiny_model.lm_logits(prefix)
    assert conditioned.shape == (len(prefix), tiny_config.vocab_size_text)
    assert np.max(np.abs(conditioned - unconditioned)) <= 1e-12


def test_logits_are_causal(tiny_model, tiny_config):
    _wake_cross_attention(tiny_model)
    audio = _audio(tiny_config)
    short = forward(tiny_model, audio, [BOS_ID, 4, 9]).data
    long = forward(tiny_model, audio, [BOS_ID, 4, 9, 6, 3]).data
    assert np.allclose(short, long[:3], atol=1e-10)


def test_frame_order_is_irrelevant_without_encoder_positions(tiny_config):
    model = build_model(tiny_config.model_copy(update={"encoder_positional": False}), seed=0)
    _wake_cross_attention(model)
    audio = _audio(tiny_config, frames=6, seed=4)
    shuffled = audio[np.random.default_rng(0).permutation(len(audio))]
    prefix = [BOS_ID, 4, 7]
    assert np.allclose(forward(model, audio, prefix).data, forward(model, shuffled, prefix).data, atol=1e-10)


def test_audio_changes_logits_once_cross_attention_is_trained(tiny_model, tiny_config):
    _wake_cross_attention(tiny_model)
    prefix = [BOS_ID, 4]
    a = forward(tiny_model, _audio(tiny_config, seed=0), prefix).data
    b = forward(tiny_model, _audio(tiny_config, seed=9), prefix).data
    assert not np.allclose(a, b)


def test_forward_rejects_bad_inputs(tiny_model, tiny_config):
    with pytest.raises(LengthError):
        forward(tiny_model, _audio(tiny_config), [BOS_ID] * (tiny_config.max_text_len + 1))
    with pytest.raises(DimensionError):
        forward(tiny_model, np.zeros((4, tiny_config.d_audio + 1)), [BOS_ID])
    with pytest.raises(LengthError):
        forward(tiny_model, _audio(tiny_config, frames=tiny_config.max_audio_frames + 1), [BOS_ID])


def test_only_learnable_parameters_receive_gradients(tiny_model, tiny_config):
    _wake_cross_attention(tiny_model)
    logits = forward(tiny_model, _audio(tiny_config), [BOS_ID, 5, 6])
    cross_entropy(logits, np.array([5, 6, 2])).backward()
    part = tiny_model.partition
    assert all(tiny_model.params[n].grad is None for n in part.frozen)
    assert all(tiny_model.params[n].grad is not None for n in part.learnable)


def test_learnable_gradients_match_finite_differences(tiny_model, tiny_config):
    _wake_cross_attention(tiny_model)
    audio = _audio(tiny_config)
    targets = np.array([5, 6, 2])
    params = [tiny_model.params["proj.w"], tiny_model.params["dec.blocks.0.xattn.wq.w"]]

    def loss():
        return cross_entropy(forward(tiny_model, audio, [BOS_ID, 5, 6]), targets)

    errors = check_gradients(loss, params)
    assert max(errors.values()) < 1e-4


def test_every_parameter_gradient_matches_finite_differences(tiny_model, tiny_config):
    rng = np.random.default_rng(2)
    for name, p in tiny_model.params.items():
        if name.startswith("proj.") or ".xattn.w" in name:
            p.data = rng.normal(0.0, 0.3, size=p.data.shape)
    tiny_model.set_learnable(tiny_model.params)
    frames, valid = pad_frames([_audio(tiny_config, frames=4)], tiny_config)
    tokens = np.array([[BOS_ID, 5, 6]])
    targets = np.array([5, 6, 2])

    def loss():
        memory = layers.linear(tiny_model.encode_tensor(frames, valid), tiny_model.params, "proj")
        return cross_entropy(tiny_model.decode_logits(tokens, memory, valid)[0], targets)

    names = sorted(tiny_model.params)
    errors = check_gradients(loss, [tiny_model.params[n] for n in names])
    worst = max(errors, key=errors.get)
    assert errors[worst] < 1e-4, names[worst]


def test_checkpoint_bytes_round_trip(tiny_model):
    meta = CheckpointMeta(epoch=3, dev_metric=12.5, seed=7, mode="translation")
    restored = Checkpoint.from_bytes(Checkpoint.from_model(tiny_model, meta).to_bytes())
    assert restored.meta == meta
    assert restored.config == tiny_model.config
    model = restored.to_model()
    assert model.partition.learnable == tiny_model.partition.learnable
    for name, p in tiny_model.params.items():
        assert np.array_equal(model.params[name].data, p.data)


def test_corrupted_checkpoint_is_detected(tiny_model, tmp_path):
    path = save_checkpoint(tiny_model, tmp_path / "m.ckpt")
    raw = bytearray(path.read_bytes())
    raw[len(raw) // 2] ^= 0xFF
    with pytest.raises(ChecksumError):
        Checkpoint.from_bytes(bytes(raw))
    with pytest.raises(FormatError):
        Checkpoint.from_bytes(b"not a checkpoint at all, definitely not" * 2)
    with pytest.raises(FormatError):
        load_checkpoint(tmp_path / "missing.ckpt")


def test_init_from_checkpoint_copies_learnable_values(tiny_model, tiny_config, tmp_path):
    _wake_cross_attention(tiny_model)
    path = save_checkpoint(tiny_model, tmp_path / "m.ckpt")
    fresh = build_model(tiny_config, seed=0)
    init_from_checkpoint(fresh, load_checkpoint(path))
    for name in tiny_model.partition.learnable:
        assert np.array_equal(fresh.params[name].data, tiny_model.params[name].data)


def test_init_from_checkpoint_rejects_other_frozen_weights(tiny_model, tiny_config):
    other = build_model(tiny_config, seed=1)
    with pytest.raises(CompatibilityError) as info:
        init_from_checkpoint(tiny_model, Checkpoint.from_model(other))
    assert "dec.tok_emb" in info.value.fields


def test_init_from_checkpoint_rejects_other_config(tiny_model, tiny_config):
    other = build_model(tiny_config.model_copy(update={"max_text_len": 12}), seed=0)
    with pytest.raises(CompatibilityError) as info:
        init_from_checkpoint(tiny_model, Checkpoint.from_model(other))
    assert info.value.fields == ["max_text_len"]


def test_init_from_checkpoint_lists_missing_learnable_values(tiny_model):
    checkpoint = Checkpoint.from_model(tiny_model)
    del checkpoint.params["proj.w"]
    del checkpoint.params["dec.blocks.0.xattn.wq.b"]
    before = tiny_model.snapshot()
    with pytest.raises(CompatibilityError) as info:
        init_from_checkpoint(tiny_model, checkpoint)
    assert info.value.fields == ["dec.blocks.0.xattn.wq.b", "proj.w"]
    assert all(np.array_equal(tiny_model.params[n].data, a) for n, a in before.items())


def test_untrained_lm_perplexity_is_near_vocab_size(tiny_model, tiny_config):
    ppl = lm_perplexity(tiny_model, [[5, 6, 7], [3, 4]])
    assert math.isfinite(ppl)
    assert 0.5 * tiny_config.vocab_size_text < ppl < 2.0 * tiny_config.vocab_size_text


def test_pretrain_rejects_empty_corpora(tiny_config):
    with pytest.raises(DataError):
        pretrain_frozen_parts(tiny_config, [], [np.zeros((3, tiny_config.d_audio))], seed=0)
    with pytest.raises(DataError):
        pretrain_frozen_parts(tiny_config, [[3, 4]], [], seed=0)


def test_pretrain_lowers_perplexity_and_restores_partition(tiny_config):
    corpus = [[3, 4, 5, 6], [3, 4, 7, 8], [9, 4, 5, 6]] * 6
    frames = [_audio(tiny_config, frames=6, seed=s) for s in range(6)]
    settings = PretrainConfig(lm_lr=1e-2, lm_batch_size=6, lm_max_epochs=8, lm_patience=8, enc_epochs=1, enc_batch_size=3)
    before = lm_perplexity(build_model(tiny_config, seed=0), corpus)
    model = pretrain_frozen_parts(tiny_config, corpus, frames, seed=0, settings=settings, lm_dev=corpus[:3])
    assert lm_perplexity(model, corpus) < before
    assert model.partition.learnable == frozenset(n for n in model.params if is_learnable_name(n))
