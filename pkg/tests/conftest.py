import os
import sys

sys.path.append(os.path.dirname(os.path.dirname(__file__)))

import pytest

from app.corpus.dataset import build_dataset
from app.model.transformer import build_model
from app.schemas import CaptionerOracle, CorpusConfig, ModelConfig, TrainConfig


@pytest.fixture
def tiny_config():
    """Small enough for finite-difference checks; vocab covers the toy LMs."""
    return ModelConfig(
        d_audio=8,
        d_text=8,
        n_blocks=1,
        n_heads=2,
        vocab_size_text=12,
        max_audio_frames=16,
        max_text_len=10,
        dropout=0.0,
        encoder_blocks=1,
        encoder_heads=2,
        mlp_ratio=2,
    )


@pytest.fixture
def tiny_model(tiny_config):
    return build_model(tiny_config, seed=0)


@pytest.fixture
def corpus_model_config():
    """Model config matching the joint corpus vocabulary and audio width."""
    return ModelConfig(
        d_audio=8,
        d_text=16,
        n_blocks=1,
        n_heads=2,
        vocab_size_text=128,
        max_audio_frames=64,
        max_text_len=24,
        dropout=0.0,
        encoder_blocks=1,
        encoder_heads=2,
        mlp_ratio=2,
    )


@pytest.fixture
def tiny_corpus_config():
    return CorpusConfig(
        n_train=12,
        n_dev=4,
        n_test=4,
        mode="translation",
        k_captions=5,
        d_audio=8,
        oracle=CaptionerOracle.from_tier("tier_A", "diverse_templates"),
    )


@pytest.fixture
def tiny_corpus(tiny_corpus_config):
    return build_dataset(tiny_corpus_config, seed=3)


@pytest.fixture
def smoke_train_config():
    return TrainConfig(lr_max=3e-3, warmup_steps=2, epochs=3, batch_size=4, seed=0, selection="loss")
