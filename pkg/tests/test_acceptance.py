"""Longer runs over a mid-sized corpus; excluded by default (``pytest -m slow``).

Thresholds for the learning and ordering checks live in ``data/expected_values.json``.
"""
import json
from pathlib import Path

import numpy as np
import pytest

from app.corpus.dataset import build_dataset, lm_sequences
from app.harness.experiments import (
    captions_row,
    decode_split,
    hypotheses_bleu,
    model_row,
    pretrain_base,
    row_label,
    run_generated_captions_topline,
    run_supervised_topline,
    table_labels,
    train_from_base,
)
from app.harness.sweeps import oracle_corpus
from app.model.checkpoint import Checkpoint
from app.model.pretrain import lm_perplexity
from app.model.transformer import BOS_ID, forward
from app.schemas import (
    CaptionerOracle,
    CorpusConfig,
    ExperimentSpec,
    ModelConfig,
    PretrainConfig,
    ReportRow,
    TrainConfig,
)

pytestmark = pytest.mark.slow

EXPECTED = json.loads((Path(__file__).parent / "data" / "expected_values.json").read_text(encoding="utf-8"))
SEED = EXPECTED["corpus"]["seed"]
TRANSLATION = row_label(ExperimentSpec(row="vgs_translation", strategy="diverse_templates"))
PARAPHRASE = row_label(ExperimentSpec(row="vgs_paraphrase", strategy="diverse_templates"))


@pytest.fixture(scope="module")
def corpus():
    c = EXPECTED["corpus"]
    config = CorpusConfig(n_train=c["n_train"], n_dev=c["n_dev"], n_test=c["n_test"], d_audio=c["d_audio"],
                          oracle=CaptionerOracle.from_tier("tier_A", "diverse_templates"))
    return build_dataset(config, seed=SEED)


@pytest.fixture(scope="module")
def paraphrase_corpus(corpus):
    return oracle_corpus(corpus.config, "tier_A", "diverse_templates", "paraphrase", SEED)


@pytest.fixture(scope="module")
def base(corpus):
    config = ModelConfig(d_audio=16, d_text=32, n_blocks=2, n_heads=2, encoder_blocks=1, encoder_heads=2,
                         mlp_ratio=2, dropout=0.0)
    settings = PretrainConfig(lm_max_epochs=15, enc_epochs=2)
    return pretrain_base(config, [corpus], seed=0, settings=settings)


@pytest.fixture(scope="module")
def wide_base(corpus, paraphrase_corpus):
    config = ModelConfig(d_audio=corpus.config.d_audio, dropout=0.0, **EXPECTED["model"])
    model = pretrain_base(config, [corpus, paraphrase_corpus], seed=0, settings=PretrainConfig(**EXPECTED["pretrain"]))
    return Checkpoint.from_model(model)


@pytest.fixture(scope="module")
def untrained_row(corpus, wide_base):
    return model_row("untrained adapter", corpus.test, decode_split(wide_base.to_model(), corpus.test))


@pytest.fixture(scope="module")
def table_rows(corpus, paraphrase_corpus, wide_base):
    """Table rows keyed by label, all from the same frozen base and training settings."""
    config = TrainConfig(**EXPECTED["train"])
    captions = ExperimentSpec(row="generated_captions_topline", strategy="diverse_templates")
    rows = [
        captions_row(corpus.test, SEED, captions),
        ReportRow(label=row_label(ExperimentSpec(row="supervised_translation_topline")),
                  cells=run_supervised_topline(wide_base, corpus, config, SEED)),
    ]
    translation = train_from_base(wide_base, corpus, config)
    rows.append(model_row(TRANSLATION, corpus.test, decode_split(translation.model, corpus.test)))
    paraphrase = train_from_base(wide_base, paraphrase_corpus, config)
    rows.append(model_row(PARAPHRASE, paraphrase_corpus.test,
                          decode_split(paraphrase.model, paraphrase_corpus.test)))
    return {r.label: r for r in rows}


def test_pretrained_lm_has_learned_the_target_language(corpus, base):
    ppl = lm_perplexity(base, lm_sequences(corpus, "dev", include_captions=False))
    assert ppl < 20.0


def test_untrained_adapter_reproduces_the_frozen_lm(corpus, base):
    item = corpus.test.items[0]
    prefix = [BOS_ID] + item.references[0][:4]
    conditioned = forward(base, corpus.test.frames(item), prefix).data
    assert np.max(np.abs(conditioned - base.lm_logits(prefix))) <= 1e-12


def test_training_keeps_the_frozen_base_intact(corpus, base):
    checkpoint = Checkpoint.from_model(base)
    config = TrainConfig(lr_max=1e-3, warmup_steps=10, epochs=4, batch_size=16, selection="loss")
    result = train_from_base(checkpoint, corpus, config)
    for name in result.model.partition.frozen:
        assert np.array_equal(result.model.params[name].data, checkpoint.params[name])
    hyps = decode_split(result.model, corpus.test)
    assert 0.0 <= hypotheses_bleu(corpus.test, hyps, 5, seed=0) <= 100.0


def test_expected_values_name_table_rows():
    labels = set(table_labels())
    for claim in EXPECTED["orderings"]:
        assert {claim["higher"], claim["lower"]} <= labels


def test_distilled_translation_beats_the_untrained_adapter(table_rows, untrained_row):
    trained = table_rows[TRANSLATION]
    for n in EXPECTED["distillation"]["n_refs"]:
        gain = trained.cells[n].mean - untrained_row.cells[n].mean
        assert gain >= EXPECTED["distillation"]["min_gain"], f"n={n} gain={gain:.2f}"


@pytest.mark.parametrize("claim", EXPECTED["orderings"], ids=lambda c: f"{c['higher']} >= {c['lower']}")
def test_row_ordering(table_rows, claim):
    n = claim["n"]
    higher = table_rows[claim["higher"]].cells[n].mean
    lower = table_rows[claim["lower"]].cells[n].mean
    assert higher >= lower + claim["margin"], f"{higher:.2f} < {lower:.2f}"


def test_caption_quality_falls_with_captioner_tier(corpus):
    spec = EXPECTED["caption_tiers"]
    scores = [
        run_generated_captions_topline(oracle_corpus(corpus.config, tier, "diverse_templates", "translation", SEED)
                                       [spec["split"]], spec["n"]).mean
        for tier in spec["order"]
    ]
    assert scores[0] > scores[1] > scores[2]
