"""Greedy, beam, diverse beam and multinomial decoding over a :class:`ScoringContext`.

Conventions shared by every strategy:

* hypothesis tokens exclude BOS and end with EOS unless ``max_len`` cut them;
* ties between equal scores go to the lowest (beam index, token id);
* ``log_prob`` is the plain sum of step log-probabilities (for sampling, of
  the temperature-adjusted distribution it was drawn from).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..errors import ConfigError
from ..numerics.ops import stable_softmax
from ..schemas import DecodeConfig, Hypothesis
from .contexts import ScoringContext

logger = logging.getLogger(__name__)

BEAM_STRATEGIES = {"beam", "diverse_beam"}


def validate_decode_config(config: DecodeConfig) -> None:
    for name in ("beam_width", "num_groups", "max_len", "num_return"):
        if getattr(config, name) < 1:
            raise ConfigError(name, "must be >= 1")
    if config.temperature <= 0:
        raise ConfigError("temperature", "must be > 0")
    if config.diversity_penalty < 0:
        raise ConfigError("diversity_penalty", "must be >= 0")
    if config.strategy == "diverse_beam" and config.beam_width % config.num_groups:
        raise ConfigError("num_groups", f"beam_width={config.beam_width} not divisible by num_groups={config.num_groups}")
    if config.strategy in BEAM_STRATEGIES and config.num_return > config.beam_width:
        raise ConfigError("num_return", f"{config.num_return} exceeds beam_width={config.beam_width}")


def _score(log_prob: float, length: int, alpha: float) -> float:
    if alpha == 0.0:
        return log_prob
    return log_prob / (max(length, 1) ** alpha)


def strip_eos(tokens: Sequence[int], eos_id: int) -> List[int]:
    out = list(tokens)
    return out[:-1] if out and out[-1] == eos_id else out


# -- greedy -----------------------------------------------------------------

def greedy(ctx: ScoringContext, config: DecodeConfig) -> Hypothesis:
    tokens: List[int] = []
    total = 0.0
    finished = False
    for _ in range(config.max_len):
        lp = ctx.log_probs([tokens])[0]
        tok = int(np.argmax(lp))
        total += float(lp[tok])
        tokens.append(tok)
        if tok == ctx.eos_id:
            finished = True
            break
    return Hypothesis(tokens=tokens, log_prob=total, score=_score(total, len(tokens), config.length_alpha), finished=finished)


# -- beam -------------------------------------------------------------------

@dataclass
class _Beam:
    """Alive and finished hypotheses of one (sub-)beam of a given width."""
    width: int
    alive: List[Tuple[List[int], float]] = field(default_factory=lambda: [([], 0.0)])
    finished: List[Tuple[List[int], float]] = field(default_factory=list)
    done: bool = False

    def step(self, lp: np.ndarray, eos: int, alpha: float, penalty: Optional[np.ndarray] = None) -> List[int]:
        """Extend alive beams with ``lp`` (one row per alive beam); returns chosen tokens."""
        cand = np.asarray([s for _, s in self.alive])[:, None] + lp
        rank = cand if penalty is None else cand - penalty[None, :]
        flat = rank.reshape(-1)
        order = np.argsort(-flat, kind="stable")
        vocab = lp.shape[1]
        new_alive: List[Tuple[List[int], float]] = []
        chosen: List[int] = []
        for pos, idx in enumerate(order):
            if len(new_alive) >= self.width or not np.isfinite(flat[idx]):
                break
            b, tok = divmod(int(idx), vocab)
            seq = self.alive[b][0] + [tok]
            if tok == eos:
                if pos < self.width:
                    self.finished.append((seq, float(cand[b, tok])))
                    chosen.append(tok)
                continue
            new_alive.append((seq, float(cand[b, tok])))
            chosen.append(tok)
        self.alive = new_alive
        if not self.alive:
            self.done = True
        elif alpha == 0.0 and len(self.finished) >= self.width:
            worst_kept = sorted((s for _, s in self.finished), reverse=True)[self.width - 1]
            if max(s for _, s in self.alive) <= worst_kept:
                self.done = True
        return chosen

    def results(self, alpha: float, group: Optional[int] = None) -> List[Hypothesis]:
        pool = [(seq, s, True) for seq, s in self.finished] + [(seq, s, False) for seq, s in self.alive]
        hyps = [
            Hypothesis(tokens=seq, log_prob=s, score=_score(s, len(seq), alpha), group=group, finished=fin)
            for seq, s, fin in pool
        ]
        hyps.sort(key=lambda h: (-h.score, not h.finished, h.tokens))
        return hyps[: self.width]


def beam_search(ctx: ScoringContext, config: DecodeConfig) -> List[Hypothesis]:
    """Top ``beam_width`` hypotheses, best first."""
    validate_decode_config(config.model_copy(update={"strategy": "beam"}))
    beam = _Beam(width=config.beam_width)
    for _ in range(config.max_len):
        if beam.done:
            break
        lp = ctx.log_probs([seq for seq, _ in beam.alive])
        beam.step(lp, ctx.eos_id, config.length_alpha)
    return beam.results(config.length_alpha)


def diverse_beam_search(ctx: ScoringContext, config: DecodeConfig) -> List[Hypothesis]:
    """Groups of width ``beam_width/num_groups`` advanced one after another each step.

    Group ``g`` ranks its candidates by log-prob minus ``diversity_penalty``
    times how often each token was chosen at this step by groups ``< g``;
    the kept scores stay unpenalized. Output is grouped by group id.
    """
    validate_decode_config(config.model_copy(update={"strategy": "diverse_beam"}))
    groups = [_Beam(width=config.beam_width // config.num_groups) for _ in range(config.num_groups)]
    for _ in range(config.max_len):
        if all(g.done for g in groups):
            break
        counts = np.zeros(ctx.vocab_size)
        for g in groups:
            if g.done:
                continue
            lp = ctx.log_probs([seq for seq, _ in g.alive])
            penalty = config.diversity_penalty * counts if config.diversity_penalty else None
            for tok in g.step(lp, ctx.eos_id, config.length_alpha, penalty):
                counts[tok] += 1
    out: List[Hypothesis] = []
    for gid, g in enumerate(groups):
        out.extend(g.results(config.length_alpha, group=gid))
    return out


# -- sampling ---------------------------------------------------------------

def multinomial(ctx: ScoringContext, config: DecodeConfig) -> List[Hypothesis]:
    """``num_return`` independent samples from softmax(log p / temperature)."""
    validate_decode_config(config.model_copy(update={"strategy": "multinomial"}))
    rng = np.random.default_rng(config.seed)
    n = config.num_return
    seqs: List[List[int]] = [[] for _ in range(n)]
    totals = np.zeros(n)
    live = list(range(n))
    for _ in range(config.max_len):
        if not live:
            break
        lp = ctx.log_probs([seqs[i] for i in live])
        probs = stable_softmax(lp / config.temperature, axis=-1)
        draws = rng.random(len(live))
        cdf = np.cumsum(probs, axis=-1)
        still: List[int] = []
        for row, i in enumerate(live):
            tok = int(np.searchsorted(cdf[row], draws[row] * cdf[row, -1], side="right"))
            tok = min(tok, probs.shape[1] - 1)
            if probs[row, tok] == 0.0:
                tok = int(np.argmax(probs[row]))
            totals[i] += float(np.log(probs[row, tok]))
            seqs[i].append(tok)
            if tok != ctx.eos_id:
                still.append(i)
        live = still
    return [
        Hypothesis(tokens=seqs[i], log_prob=float(totals[i]),
                   score=_score(float(totals[i]), len(seqs[i]), config.length_alpha),
                   finished=bool(seqs[i]) and seqs[i][-1] == ctx.eos_id)
        for i in range(n)
    ]


# -- dispatch ---------------------------------------------------------------

def decode(ctx: ScoringContext, config: DecodeConfig) -> List[Hypothesis]:
    validate_decode_config(config)
    if config.strategy == "greedy":
        return [greedy(ctx, config)]
    if config.strategy == "beam":
        return beam_search(ctx, config)[: config.num_return]
    if config.strategy == "diverse_beam":
        hyps = diverse_beam_search(ctx, config)
        return _one_per_group(hyps)[: config.num_return]
    return multinomial(ctx, config)


def _one_per_group(hyps: Sequence[Hypothesis]) -> List[Hypothesis]:
    best: Dict[int, Hypothesis] = {}
    for h in hyps:
        gid = h.group if h.group is not None else 0
        if gid not in best:
            best[gid] = h
    return [best[g] for g in sorted(best)]


def generate_k_captions(ctx: ScoringContext, config: DecodeConfig, k: int) -> List[List[int]]:
    """k token sequences (EOS stripped): top-k beams, one per diverse group, or k samples."""
    if k < 1:
        raise ConfigError("k", "must be >= 1")
    strategy = config.strategy
    if strategy == "greedy":
        if k != 1:
            raise ConfigError("k", "greedy decoding yields a single caption")
        hyps = [greedy(ctx, config)]
    elif strategy == "beam":
        if k > config.beam_width:
            raise ConfigError("k", f"{k} exceeds beam_width={config.beam_width}")
        hyps = beam_search(ctx, config)[:k]
    elif strategy == "diverse_beam":
        if k > config.num_groups:
            raise ConfigError("k", f"{k} exceeds num_groups={config.num_groups}")
        hyps = _one_per_group(diverse_beam_search(ctx, config))[:k]
    else:
        hyps = multinomial(ctx, config.model_copy(update={"num_return": k}))
    if len(hyps) < k:
        raise ConfigError("k", f"only {len(hyps)} hypotheses obtainable")
    return [strip_eos(h.tokens, ctx.eos_id) for h in hyps]
