import math

import numpy as np
import pytest

from app.corpus.grammar import Vocabulary
from app.errors import ConfigError, DataError
from app.metrics.bleu import clipped_ngram_counts, closest_ref_length, corpus_bleu, format_score
from app.metrics.tokenize import detokenize, tokenize
from app.schemas import EvalPair


def test_brevity_penalty_only():
    score = corpus_bleu([("a b c d".split(), ["a b c d e".split()])])
    assert score.precisions == [1.0, 1.0, 1.0, 1.0]
    assert math.isclose(score.bp, 0.77880, abs_tol=1e-5)
    assert math.isclose(score.score, 77.880, abs_tol=1e-3)


def test_unigram_clipping():
    assert clipped_ngram_counts("a a a".split(), ["a b".split()], 1) == (1, 3)
    assert clipped_ngram_counts("a a a".split(), ["a b".split(), "a a c".split()], 1) == (2, 3)
    assert clipped_ngram_counts("a".split(), ["a".split()], 2) == (0, 0)


def test_order_out_of_range():
    with pytest.raises(ConfigError):
        clipped_ngram_counts([1, 2], [[1, 2]], 5)


def test_perfect_match_is_100():
    score = corpus_bleu([([3, 4, 5, 6, 7], [[3, 4, 5, 6, 7], [9, 9]])])
    assert math.isclose(score.score, 100.0)
    assert score.ref_len == 5


def test_zero_precision_without_smoothing_is_zero():
    score = corpus_bleu([([3, 4, 5], [[3, 4, 5, 6]])])
    assert score.totals[3] == 0
    assert score.score == 0.0
    smoothed = corpus_bleu([([3, 4, 5, 9], [[3, 4, 5, 6]])], smoothing="add_epsilon")
    assert smoothed.score > 0.0


def test_empty_hypothesis_gives_zero():
    score = corpus_bleu([([], [[3, 4]])])
    assert score.bp == 0.0
    assert score.score == 0.0


def test_closest_reference_length_prefers_shorter_on_tie():
    assert closest_ref_length(4, [[1, 2, 3], [1, 2, 3, 4, 5]]) == 3


def test_empty_corpus_and_bad_pairs_raise():
    with pytest.raises(DataError):
        corpus_bleu([])
    with pytest.raises(DataError):
        corpus_bleu([([1, 2], [])])
    with pytest.raises(DataError):
        corpus_bleu([([1, 2], [[]])])


def test_corpus_counts_are_pooled_not_averaged():
    pairs = [([3, 4, 5, 6], [[3, 4, 5, 6]]), ([7, 8, 9, 10], [[7, 8, 9, 11]])]
    score = corpus_bleu(pairs)
    assert score.matched == [7, 5, 3, 1]
    assert score.totals == [8, 6, 4, 2]
    expected = 100.0 * math.exp((math.log(7 / 8) + math.log(5 / 6) + math.log(3 / 4) + math.log(1 / 2)) / 4)
    assert math.isclose(score.score, expected, rel_tol=1e-12)


def test_accepts_eval_pairs():
    pair = EvalPair(hypothesis=[3, 4, 5, 6], references=[[3, 4, 5, 6]])
    assert corpus_bleu([pair]).score == 100.0


def test_format_score():
    text = format_score(corpus_bleu([("a b c d".split(), ["a b c d e".split()])]))
    assert text.startswith("BLEU = 77.88 100.0/100.0/100.0/100.0 (BP = 0.779")
    assert "hyp_len = 4 ref_len = 5" in text


def _random_corpus(seed, n_items=30, n_refs=3, vocab=6):
    rng = np.random.default_rng(seed)

    def sentence():
        return [int(t) for t in rng.integers(3, 3 + vocab, size=int(rng.integers(4, 11)))]

    return [(sentence(), [sentence() for _ in range(n_refs)]) for _ in range(n_items)]


@pytest.mark.parametrize("seed", [0, 1, 2, 3])
def test_agrees_with_sacrebleu(seed):
    sacrebleu = pytest.importorskip("sacrebleu")
    pairs = _random_corpus(seed)
    ours = corpus_bleu(pairs)
    hyps = [" ".join(f"w{t}" for t in h) for h, _ in pairs]
    streams = [[" ".join(f"w{t}" for t in refs[j]) for _, refs in pairs] for j in range(3)]
    theirs = sacrebleu.metrics.BLEU(tokenize="none", smooth_method="none").corpus_score(hyps, streams)
    assert ours.score > 0.0
    assert math.isclose(ours.score, theirs.score, abs_tol=1e-6)
    assert ours.hyp_len == theirs.sys_len
    assert ours.ref_len == theirs.ref_len


def _naive_bleu(pairs):
    matched, totals = [0] * 4, [0] * 4
    hyp_len = ref_len = 0
    for hyp, refs in pairs:
        hyp_len += len(hyp)
        ref_len += sorted((abs(len(r) - len(hyp)), len(r)) for r in refs)[0][1]
        for n in range(1, 5):
            grams = {}
            for i in range(len(hyp) - n + 1):
                g = tuple(hyp[i : i + n])
                grams[g] = grams.get(g, 0) + 1
            for g, c in grams.items():
                best = 0
                for r in refs:
                    best = max(best, sum(1 for i in range(len(r) - n + 1) if tuple(r[i : i + n]) == g))
                matched[n - 1] += min(c, best)
                totals[n - 1] += c
    if min(matched) == 0:
        return 0.0
    bp = 1.0 if hyp_len >= ref_len else math.exp(1 - ref_len / hyp_len)
    return 100.0 * bp * math.exp(sum(math.log(m / t) for m, t in zip(matched, totals)) / 4)


@pytest.mark.parametrize("seed", range(20))
def test_matches_naive_bleu(seed):
    pairs = _random_corpus(100 + seed, n_items=10, n_refs=int(np.random.default_rng(seed).integers(1, 5)), vocab=4)
    assert math.isclose(corpus_bleu(pairs).score, _naive_bleu(pairs), abs_tol=1e-9)


def test_order_of_pairs_and_references_is_irrelevant():
    pairs = _random_corpus(7)
    shuffled = [(h, refs[::-1]) for h, refs in reversed(pairs)]
    assert math.isclose(corpus_bleu(pairs).score, corpus_bleu(shuffled).score, abs_tol=1e-12)


def test_tokenize_round_trip_through_vocabulary():
    vocab = Vocabulary.joint()
    ids = tokenize("a brown dog runs in the field", vocab)
    assert detokenize(ids, vocab) == "a brown dog runs in the field"
    assert tokenize(ids) == ids
    with pytest.raises(TypeError):
        tokenize("a dog")
