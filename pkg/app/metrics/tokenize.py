"""Tokenization for scoring.

Synthetic sentences are already token-id sequences, so tokenizing them is
the identity; display strings are split on whitespace and looked up.
"""
from typing import List, Optional, Protocol, Sequence, Union


class WordIndex(Protocol):
    def id_of(self, word: str) -> int: ...

    def word_of(self, token_id: int) -> str: ...


def tokenize(text: Union[str, Sequence[int]], vocab: Optional[WordIndex] = None) -> List[int]:
    if isinstance(text, str):
        if vocab is None:
            raise TypeError("a vocabulary is needed to tokenize display strings")
        return [vocab.id_of(w) for w in text.split()]
    return [int(t) for t in text]


def detokenize(tokens: Sequence[int], vocab: WordIndex) -> str:
    return " ".join(vocab.word_of(int(t)) for t in tokens)
