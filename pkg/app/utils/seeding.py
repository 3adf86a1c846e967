"""Deterministic seed derivation.

Every random draw in the package comes from a ``numpy.random.Generator`` built
from a master seed plus a tuple of salts (split name, scene id, epoch, ...),
so each stream is reproducible on its own and independent of call order.
"""
import hashlib
from typing import Union

import numpy as np

Salt = Union[int, str]


def derive_seed(seed: int, *salts: Salt) -> int:
    h = hashlib.sha256(str(int(seed)).encode("ascii"))
    for salt in salts:
        h.update(b"\x1f")
        h.update(str(salt).encode("utf-8"))
    return int.from_bytes(h.digest()[:8], "little") & ((1 << 63) - 1)


def rng_for(seed: int, *salts: Salt) -> np.random.Generator:
    return np.random.default_rng(derive_seed(seed, *salts))
