"""Captioner sensitivity grid (tier × strategy) and the caption-count sweep."""
from __future__ import annotations

import logging
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Union

from ..corpus.dataset import Corpus, build_dataset
from ..errors import ConfigError
from ..model.checkpoint import Checkpoint
from ..schemas import CaptionerOracle, CellResult, CorpusConfig, SweepCell, TrainConfig
from .experiments import paraphrase_then_translation, run_generated_captions_topline, run_vgs, train_from_base

logger = logging.getLogger(__name__)

TIERS = ("tier_A", "tier_B", "tier_C")
STRATEGIES = ("deterministic_best", "diverse_templates", "sampled")
CAPTION_COUNTS = tuple(range(1, 11))


def oracle_corpus(config: CorpusConfig, tier: str, strategy: str, mode: str, seed: int) -> Corpus:
    """Same scenes and audio as any other corpus of this seed; only the captions change."""
    update = {"mode": mode, "oracle": CaptionerOracle.from_tier(tier, strategy)}
    return build_dataset(config.model_copy(update=update), seed)


def sensitivity_sweep(base: Checkpoint, corpus_config: CorpusConfig, train_config: TrainConfig,
                      corpus_seed: int, seed: int = 0, tiers: Sequence[str] = TIERS,
                      strategies: Sequence[str] = STRATEGIES,
                      run_dir: Optional[Union[str, Path]] = None) -> List[SweepCell]:
    cells: List[SweepCell] = []
    for tier in tiers:
        for strategy in strategies:
            para = oracle_corpus(corpus_config, tier, strategy, "paraphrase", corpus_seed)
            trans = oracle_corpus(corpus_config, tier, strategy, "translation", corpus_seed)
            cell_dir = Path(run_dir) / f"{tier}-{strategy}" if run_dir is not None else None
            p_res, t_res = paraphrase_then_translation(base, para, trans, train_config, cell_dir)
            cell = SweepCell(
                tier=tier,
                strategy=strategy,
                caption_bleu=run_generated_captions_topline(trans.test, 5, seed).mean,
                translation_bleu=_n5(run_vgs(t_res.model, trans.test, seed, ns=(5,))),
                paraphrase_bleu=_n5(run_vgs(p_res.model, para.test, seed, ns=(5,))),
            )
            logger.info("sweep_cell tier=%s strategy=%s captions=%.2f translation=%.2f paraphrase=%.2f",
                        tier, strategy, cell.caption_bleu, cell.translation_bleu, cell.paraphrase_bleu)
            cells.append(cell)
    return cells


def _n5(cells: Dict[int, Optional[CellResult]]) -> float:
    cell = cells[5]
    if cell is None:
        raise ConfigError("n", "no BLEU at n=5")
    return cell.mean


def sweep_summary(cells: Iterable[SweepCell]) -> Dict[str, object]:
    """Argmax cells per metric and whether caption quality picks a different cell than translation."""
    cells = list(cells)
    if not cells:
        raise ConfigError("cells", "empty sweep")
    best_caption = max(cells, key=lambda c: c.caption_bleu)
    best_translation = max(cells, key=lambda c: c.translation_bleu)
    return {
        "best_caption": (best_caption.tier, best_caption.strategy),
        "best_translation": (best_translation.tier, best_translation.strategy),
        "argmax_differs": (best_caption.tier, best_caption.strategy) != (best_translation.tier, best_translation.strategy),
    }


def caption_count_sweep(base: Checkpoint, corpus: Corpus, train_config: TrainConfig, seed: int = 0,
                        ks: Sequence[int] = CAPTION_COUNTS,
                        run_dir: Optional[Union[str, Path]] = None) -> Dict[int, CellResult]:
    """One model per k trained on the first k captions of each scene; BLEU at n=5."""
    if corpus.config.k_captions < max(ks):
        raise ConfigError("k_captions", f"corpus holds {corpus.config.k_captions} captions, sweep needs {max(ks)}")
    out: Dict[int, CellResult] = {}
    for k in ks:
        k_dir = Path(run_dir) / f"k{k:02d}" if run_dir is not None else None
        result = train_from_base(base, corpus, train_config.model_copy(update={"k_captions": k}), k_dir)
        cell = run_vgs(result.model, corpus.test, seed, ns=(5,))[5]
        if cell is None:
            raise ConfigError("n", "no BLEU at n=5")
        out[k] = cell
        logger.info("caption_count k=%d bleu=%.2f", k, cell.mean)
    return out


def plateau_stats(results: Dict[int, CellResult], knee: int = 3) -> Dict[str, float]:
    """Gain from k=1 to ``knee`` and the max-min spread of means for k >= knee."""
    tail = [c.mean for k, c in results.items() if k >= knee]
    return {
        "gain": results[knee].mean - results[1].mean,
        "spread": (max(tail) - min(tail)) if tail else 0.0,
    }
