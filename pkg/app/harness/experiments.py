"""Table-style experiment rows: toplines and distilled models scored over n references."""
from __future__ import annotations

import logging
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

from ..corpus.dataset import Corpus, DatasetSplit, audio_frames, lm_sequences
from ..decode.batch import decode_batch
from ..decode.contexts import ModelContext
from ..decode.strategies import generate_k_captions
from ..errors import ProtocolError
from ..metrics.bleu import corpus_bleu
from ..model.checkpoint import Checkpoint
from ..model.pretrain import pretrain_frozen_parts
from ..model.transformer import AudioToTextModel
from ..schemas import (
    CaptionerOracle,
    CellResult,
    DecodeConfig,
    ExperimentSpec,
    ModelConfig,
    PretrainConfig,
    ReferenceProtocol,
    ReportRow,
    RowKind,
    TrainConfig,
)
from ..train.loop import TrainResult, train
from ..utils.seeding import rng_for
from .protocols import N_VALUES, REPEATS, cells_from, cells_over_n, repeat_seeds, sample_references, summarize

logger = logging.getLogger(__name__)

ROW_LABELS: Dict[str, str] = {
    "annotator_topline": "annotator topline",
    "supervised_translation_topline": "supervised translation topline",
    "generated_captions_topline": "generated captions topline",
    "vgs_translation": "vgs translation",
    "vgs_paraphrase": "vgs paraphrase",
}
CAPTION_ROWS = ("generated_captions_topline", "vgs_translation", "vgs_paraphrase")
CAPTION_STRATEGY_LABELS: Dict[str, str] = {
    "deterministic_best": "beam captions",
    "diverse_templates": "diverse captions",
    "sampled": "sampled captions",
}

# rows of the results table, in print order
TABLE_ROWS: Tuple[ExperimentSpec, ...] = (
    ExperimentSpec(row="annotator_topline"),
    ExperimentSpec(row="supervised_translation_topline"),
    ExperimentSpec(row="generated_captions_topline", strategy="diverse_templates"),
    ExperimentSpec(row="vgs_translation", strategy="deterministic_best"),
    ExperimentSpec(row="vgs_translation", strategy="diverse_templates"),
    ExperimentSpec(row="vgs_paraphrase", strategy="diverse_templates"),
)

Hypotheses = Mapping[str, List[int]]


# -- frozen base and training ------------------------------------------------

def pretrain_base(config: ModelConfig, corpora: Sequence[Corpus], seed: int,
                  settings: Optional[PretrainConfig] = None) -> AudioToTextModel:
    """One frozen base shared by every run: LM on target text, encoder on audio of all corpora."""
    lm = [s for c in corpora for s in lm_sequences(c, "train")]
    dev = [s for c in corpora for s in lm_sequences(c, "dev", include_captions=False)]
    return pretrain_frozen_parts(config, lm, audio_frames(corpora, "train"), seed, settings, lm_dev=dev)


def train_from_base(base: Checkpoint, corpus: Corpus, config: TrainConfig,
                    run_dir: Optional[Union[str, Path]] = None, init: Optional[Checkpoint] = None) -> TrainResult:
    return train(base.to_model(), corpus, config.model_copy(update={"mode": corpus.config.mode}), run_dir, init=init)


def paraphrase_then_translation(base: Checkpoint, paraphrase: Corpus, translation: Corpus, config: TrainConfig,
                                run_dir: Optional[Union[str, Path]] = None) -> Tuple[TrainResult, TrainResult]:
    """Translation runs start from the best paraphrase run."""
    root = Path(run_dir) if run_dir is not None else None
    para = train_from_base(base, paraphrase, config, root / "paraphrase" if root else None)
    trans = train_from_base(base, translation, config, root / "translation" if root else None, init=para.checkpoint)
    return para, trans


# -- decoding ---------------------------------------------------------------

def decode_split(model: AudioToTextModel, split: DatasetSplit, config: Optional[DecodeConfig] = None) -> Dict[str, List[int]]:
    """One hypothesis per item; greedy goes through the batched decoder."""
    config = config or DecodeConfig()
    items = split.items
    if config.strategy == "greedy":
        hyps = decode_batch(model, [split.frames(it) for it in items], config.max_len)
        return {it.item_id: h for it, h in zip(items, hyps)}
    out: Dict[str, List[int]] = {}
    for it in items:
        ctx = ModelContext(model, split.frames(it))
        out[it.item_id] = generate_k_captions(ctx, config, 1)[0]
    return out


# -- scoring ----------------------------------------------------------------

def hypotheses_bleu(split: DatasetSplit, hyps: Hypotheses, n: int, seed: int) -> float:
    protocol = ReferenceProtocol(n=n, include_input_rule=True, seed=seed)
    return corpus_bleu([(hyps[it.item_id], sample_references(it, protocol)) for it in split.items]).score


def annotator_bleu(split: DatasetSplit, n: int, seed: int) -> float:
    """One reference per scene plays the hypothesis; ``n`` of the others are the references."""
    pairs = []
    for scene_id, items in sorted(split.by_scene().items()):
        refs = items[0].references
        if not 1 <= n <= len(refs) - 1:
            raise ProtocolError(f"annotator topline needs n in 1..{len(refs) - 1}, got {n}")
        rng = rng_for(seed, "annotator", scene_id)
        held = int(rng.integers(len(refs)))
        rest = [i for i in range(len(refs)) if i != held]
        picked = sorted(rest[i] for i in rng.choice(len(rest), size=n, replace=False))
        pairs.append((refs[held], [refs[i] for i in picked]))
    return corpus_bleu(pairs).score


def caption_bleu(split: DatasetSplit, n: int, seed: int) -> float:
    """A random oracle caption per item as the hypothesis."""
    protocol = ReferenceProtocol(n=n, include_input_rule=True, seed=seed)
    pairs = []
    for it in split.items:
        pick = int(rng_for(seed, "caption-hypothesis", it.item_id).integers(len(it.captions)))
        pairs.append((it.captions[pick], sample_references(it, protocol)))
    return corpus_bleu(pairs).score


def run_annotator_topline(split: DatasetSplit, n: int, seed: int = 0, repeats: int = REPEATS) -> CellResult:
    return summarize([annotator_bleu(split, n, s) for s in repeat_seeds(seed, repeats)])


def run_generated_captions_topline(split: DatasetSplit, n: int, seed: int = 0, repeats: int = REPEATS) -> CellResult:
    """Caption quality of the oracle the corpus was built with."""
    return summarize([caption_bleu(split, n, s) for s in repeat_seeds(seed, repeats)])


def run_vgs(model: AudioToTextModel, split: DatasetSplit, seed: int = 0,
            decode_config: Optional[DecodeConfig] = None, ns: Sequence[int] = N_VALUES,
            hyps: Optional[Hypotheses] = None) -> Dict[int, Optional[CellResult]]:
    hyps = hyps if hyps is not None else decode_split(model, split, decode_config)
    return cells_over_n(lambda n, s: hypotheses_bleu(split, hyps, n, s), seed, ns)


def run_supervised_topline(base: Checkpoint, corpus: Corpus, config: TrainConfig, seed: int = 0,
                           run_dir: Optional[Union[str, Path]] = None) -> Dict[int, Optional[CellResult]]:
    """Same architecture trained on each utterance's own reference translation."""
    result = train_from_base(base, corpus, config.model_copy(update={"targets": "references"}), run_dir)
    return run_vgs(result.model, corpus.test, seed)


# -- rows -------------------------------------------------------------------

def row_label(spec: ExperimentSpec) -> str:
    """Caption-trained rows carry their captioning strategy, and the tier when it is not tier A."""
    label = ROW_LABELS[spec.row]
    if spec.row not in CAPTION_ROWS or spec.strategy is None:
        return label
    label = f"{label} ({CAPTION_STRATEGY_LABELS[spec.strategy]})"
    return label if spec.tier == "tier_A" else f"{label} [{spec.tier}]"


def table_labels() -> List[str]:
    return [row_label(spec) for spec in TABLE_ROWS]


def experiment_for(row: RowKind, oracle: CaptionerOracle, repeats: int = REPEATS) -> ExperimentSpec:
    """Row description for outputs tied to a corpus built with ``oracle``."""
    if row in CAPTION_ROWS:
        return ExperimentSpec(row=row, tier=oracle.tier, strategy=oracle.strategy, repeats=repeats)
    return ExperimentSpec(row=row, repeats=repeats)


def annotator_row(split: DatasetSplit, seed: int = 0, spec: Optional[ExperimentSpec] = None) -> ReportRow:
    exp = spec or ExperimentSpec(row="annotator_topline")
    return ReportRow(label=row_label(exp),
                     cells=cells_from(lambda n: run_annotator_topline(split, n, seed, exp.repeats)))


def captions_row(split: DatasetSplit, seed: int = 0, spec: Optional[ExperimentSpec] = None) -> ReportRow:
    exp = spec or ExperimentSpec(row="generated_captions_topline")
    return ReportRow(label=row_label(exp),
                     cells=cells_from(lambda n: run_generated_captions_topline(split, n, seed, exp.repeats)))


def model_row(label: str, split: DatasetSplit, hyps: Hypotheses, seed: int = 0, repeats: int = REPEATS) -> ReportRow:
    row = ReportRow(label=label,
                    cells=cells_over_n(lambda n, s: hypotheses_bleu(split, hyps, n, s), seed, repeats=repeats))
    logger.info("row label=%r n5=%s", label, row.cells.get(5).mean if row.cells.get(5) else None)
    return row
