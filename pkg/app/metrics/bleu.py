"""Corpus BLEU-4 with multi-reference clipping (sacrebleu conventions on token ids)."""
from __future__ import annotations

import math
from collections import Counter
from typing import Iterable, List, Sequence, Tuple, Union

from pydantic import ValidationError

from ..errors import ConfigError, DataError
from ..schemas import BleuScore, EvalPair, Smoothing

MAX_ORDER = 4
SMOOTH_EPSILON = 1e-9

PairLike = Union[EvalPair, Tuple[Sequence[int], Sequence[Sequence[int]]]]


def ngram_counts(tokens: Sequence, n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def clipped_ngram_counts(hyp: Sequence, refs: Sequence[Sequence], n: int) -> Tuple[int, int]:
    """(matched, total): each hypothesis n-gram counts at most its max count in any one reference."""
    if not 1 <= n <= MAX_ORDER:
        raise ConfigError("n", f"must be in 1..{MAX_ORDER}")
    hyp_counts = ngram_counts(hyp, n)
    total = sum(hyp_counts.values())
    if total == 0:
        return 0, 0
    ceiling: Counter = Counter()
    for ref in refs:
        ceiling |= ngram_counts(ref, n)
    matched = sum(min(c, ceiling[g]) for g, c in hyp_counts.items())
    return matched, total


def closest_ref_length(hyp_len: int, refs: Sequence[Sequence]) -> int:
    """Reference length closest to ``hyp_len``; ties go to the shorter one."""
    return min((abs(len(r) - hyp_len), len(r)) for r in refs)[1]


def _coerce(pairs: Iterable[PairLike]) -> List[EvalPair]:
    out: List[EvalPair] = []
    for p in pairs:
        if isinstance(p, EvalPair):
            out.append(p)
            continue
        hyp, refs = p
        try:
            out.append(EvalPair(hypothesis=list(hyp), references=[list(r) for r in refs]))
        except ValidationError as exc:
            raise DataError(f"invalid evaluation pair: {exc.errors()[0].get('msg')}") from exc
    return out


def corpus_bleu(pairs: Iterable[PairLike], smoothing: Smoothing = "none") -> BleuScore:
    """Counts are summed over the corpus per order before dividing.

    Without smoothing any zero precision gives a score of 0. ``add_epsilon``
    replaces zero matched counts by 1e-9.
    """
    items = _coerce(pairs)
    if not items:
        raise DataError("corpus_bleu needs at least one pair")
    if smoothing not in ("none", "add_epsilon"):
        raise ConfigError("smoothing", f"unknown smoothing {smoothing!r}")
    matched = [0] * MAX_ORDER
    totals = [0] * MAX_ORDER
    hyp_len = 0
    ref_len = 0
    for pair in items:
        hyp_len += len(pair.hypothesis)
        ref_len += closest_ref_length(len(pair.hypothesis), pair.references)
        for n in range(1, MAX_ORDER + 1):
            m, t = clipped_ngram_counts(pair.hypothesis, pair.references, n)
            matched[n - 1] += m
            totals[n - 1] += t
    precisions: List[float] = []
    for m, t in zip(matched, totals):
        if t == 0:
            precisions.append(0.0)
        elif m == 0 and smoothing == "add_epsilon":
            precisions.append(SMOOTH_EPSILON / t)
        else:
            precisions.append(m / t)
    if hyp_len == 0:
        bp = 0.0
    elif hyp_len >= ref_len:
        bp = 1.0
    else:
        bp = math.exp(1.0 - ref_len / hyp_len)
    if min(precisions) > 0.0:
        geo = math.exp(sum(math.log(p) for p in precisions) / MAX_ORDER)
        score = 100.0 * bp * geo
    else:
        score = 0.0
    return BleuScore(
        score=score,
        precisions=precisions,
        bp=bp,
        hyp_len=hyp_len,
        ref_len=ref_len,
        matched=matched,
        totals=totals,
    )


def format_score(score: BleuScore) -> str:
    precs = "/".join(f"{100.0 * p:.1f}" for p in score.precisions)
    return (f"BLEU = {score.score:.2f} {precs} (BP = {score.bp:.3f} "
            f"hyp_len = {score.hyp_len} ref_len = {score.ref_len})")
