from .bleu import clipped_ngram_counts, corpus_bleu, format_score
from .tokenize import detokenize, tokenize

__all__ = ["clipped_ngram_counts", "corpus_bleu", "detokenize", "format_score", "tokenize"]
