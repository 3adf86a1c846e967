"""Captioner oracle: a noisy scene observation realized through the decoding strategies.

The oracle's language model is a trie over every grammatical target-language
realization of the observed scene, weighted by a template prior and by the
function-word jitter weights. Decoding it with beam search, diverse beam
search or multinomial sampling gives the three realization strategies.
"""
from __future__ import annotations

import itertools
import logging
from functools import lru_cache
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from ..decode.strategies import generate_k_captions
from ..errors import ConfigError
from ..schemas import CaptionerOracle, DecodeConfig, Scene
from ..utils.seeding import derive_seed, rng_for
from .grammar import EOS_ID, Grammar, Jitter, Vocabulary
from .scenes import observe_scene

logger = logging.getLogger(__name__)

TEMPLATE_PRIOR: Tuple[float, ...] = (0.4, 0.12, 0.12, 0.12, 0.12, 0.12)
CAPTION_MAX_LEN = 16


@lru_cache(maxsize=1)
def default_vocabulary() -> Vocabulary:
    return Vocabulary.joint()


@lru_cache(maxsize=1)
def default_target_grammar() -> Grammar:
    return Grammar.target()


def _jitter_choices(slots: Sequence[Jitter], with_jitter: bool) -> Iterable[Tuple[Tuple[int, ...], float]]:
    if not with_jitter:
        yield tuple(0 for _ in slots), 1.0
        return
    for combo in itertools.product(*(range(len(s.options)) for s in slots)):
        weight = 1.0
        for s, c in zip(slots, combo):
            weight *= s.weights[c]
        yield combo, weight


class CaptionLM:
    """Next-token distribution over all realizations of one observed scene.

    Unreachable tokens get log-probability ``-inf``; prefixes outside the
    trie put all mass on EOS.
    """

    def __init__(self, scene: Scene, grammar: Grammar, vocab: Vocabulary, jitter: bool = True,
                 prior: Sequence[float] = TEMPLATE_PRIOR) -> None:
        self.vocab_size = len(vocab)
        self.eos_id = EOS_ID
        self.templates = grammar.compatible_templates(scene, limit=len(prior))
        z = sum(prior[t] for t in self.templates)
        self._next: Dict[Tuple[int, ...], Dict[int, float]] = {}
        for tid in self.templates:
            slots = grammar.template(tid).jitter_slots(scene)
            for combo, weight in _jitter_choices(slots, jitter):
                words = grammar.words_for(scene, tid, combo)
                tokens = [vocab.id_of(w) for w in words] + [EOS_ID]
                mass = prior[tid] / z * weight
                for i, tok in enumerate(tokens):
                    row = self._next.setdefault(tuple(tokens[:i]), {})
                    row[tok] = row.get(tok, 0.0) + mass

    def log_probs(self, prefixes: Sequence[Sequence[int]]) -> np.ndarray:
        out = np.full((len(prefixes), self.vocab_size), -np.inf)
        for i, prefix in enumerate(prefixes):
            row = self._next.get(tuple(int(t) for t in prefix))
            if row is None:
                out[i, self.eos_id] = 0.0
                continue
            total = sum(row.values())
            for tok, mass in row.items():
                out[i, tok] = np.log(mass / total)
        return out

    def sequence_log_prob(self, tokens: Sequence[int]) -> float:
        total = 0.0
        for i, tok in enumerate(tokens):
            total += float(self.log_probs([tokens[:i]])[0, tok])
        return total


def validate_oracle(oracle: CaptionerOracle) -> None:
    if not 0.0 <= oracle.p_confuse <= 0.5:
        raise ConfigError("p_confuse", "must lie in [0, 0.5]")
    if oracle.temperature <= 0:
        raise ConfigError("temperature", "must be > 0")
    if oracle.diversity_penalty < 0:
        raise ConfigError("diversity_penalty", "must be >= 0")


def oracle_captions(scene: Scene, oracle: CaptionerOracle, k: int, seed: int,
                    grammar: Optional[Grammar] = None, vocab: Optional[Vocabulary] = None) -> List[List[int]]:
    """k target-language captions of ``scene`` (token ids, no BOS/EOS)."""
    validate_oracle(oracle)
    if k < 1:
        raise ConfigError("k", "must be >= 1")
    grammar = grammar or default_target_grammar()
    vocab = vocab or default_vocabulary()
    inventories = grammar.inventories
    rng = rng_for(seed, "oracle", scene.scene_id)

    if oracle.strategy == "sampled":
        captions: List[List[int]] = []
        for i in range(k):
            seen = observe_scene(scene, oracle.p_confuse, rng, inventories)
            cfg = DecodeConfig(strategy="multinomial", temperature=oracle.temperature, max_len=CAPTION_MAX_LEN,
                               seed=derive_seed(seed, "oracle-sample", scene.scene_id, i))
            captions.extend(generate_k_captions(CaptionLM(seen, grammar, vocab, jitter=True), cfg, 1))
        return captions

    seen = observe_scene(scene, oracle.p_confuse, rng, inventories)
    if oracle.strategy == "deterministic_best":
        cfg = DecodeConfig(strategy="beam", beam_width=k, max_len=CAPTION_MAX_LEN)
        return generate_k_captions(CaptionLM(seen, grammar, vocab, jitter=True), cfg, k)

    lm = CaptionLM(seen, grammar, vocab, jitter=False)
    if k > len(lm.templates):
        raise ConfigError("k", f"{k} captions requested but scene {scene.scene_id} has "
                               f"{len(lm.templates)} distinct templates")
    cfg = DecodeConfig(strategy="diverse_beam", beam_width=k, num_groups=k,
                       diversity_penalty=oracle.diversity_penalty, max_len=CAPTION_MAX_LEN)
    return generate_k_captions(lm, cfg, k)


def distinct_unigram_rate(captions: Sequence[Sequence[int]]) -> float:
    """Distinct token types over total tokens across one scene's captions."""
    total = sum(len(c) for c in captions)
    if total == 0:
        return 0.0
    return len({t for c in captions for t in c}) / total


def mean_diversity(caption_sets: Iterable[Sequence[Sequence[int]]]) -> float:
    rates = [distinct_unigram_rate(c) for c in caption_sets]
    return float(np.mean(rates)) if rates else 0.0
