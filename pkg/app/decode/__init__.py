from .contexts import ModelContext, PrefixTableLM, ScoringContext
from .strategies import (
    beam_search,
    decode,
    diverse_beam_search,
    generate_k_captions,
    greedy,
    multinomial,
)

__all__ = [
    "ModelContext",
    "PrefixTableLM",
    "ScoringContext",
    "beam_search",
    "decode",
    "diverse_beam_search",
    "generate_k_captions",
    "greedy",
    "multinomial",
]
