"""Reference-subset sampling and the mean ± 2σ repeat summary."""
from __future__ import annotations

from typing import Callable, Dict, Iterable, List, Optional, Sequence

import numpy as np

from ..errors import ProtocolError
from ..schemas import CellResult, DatasetItem, ReferenceProtocol
from ..utils.seeding import rng_for

REPEATS = 5
N_VALUES = (1, 2, 3, 4, 5)


def reference_indices(n_available: int, protocol: ReferenceProtocol, own: Optional[int],
                      rng: np.random.Generator) -> List[int]:
    """Indices of the sampled references, ascending.

    With the include-input rule the input's own reference is always kept and
    the other ``n-1`` are drawn without replacement from the rest.
    """
    n = protocol.n
    if not 1 <= n <= n_available:
        raise ProtocolError(f"n={n} references requested, {n_available} available")
    if n == n_available:
        return list(range(n_available))
    if protocol.include_input_rule and own is not None:
        rest = [i for i in range(n_available) if i != own]
        picked = [own] + [rest[i] for i in rng.choice(len(rest), size=n - 1, replace=False)]
    else:
        picked = [int(i) for i in rng.choice(n_available, size=n, replace=False)]
    return sorted(int(i) for i in picked)


def sample_references(item: DatasetItem, protocol: ReferenceProtocol) -> List[List[int]]:
    rng = rng_for(protocol.seed, "references", item.item_id)
    idx = reference_indices(len(item.references), protocol, item.own_reference, rng)
    return [list(item.references[i]) for i in idx]


def summarize(values: Sequence[float]) -> CellResult:
    """Mean and two sample standard deviations."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0:
        raise ProtocolError("no repeats to summarize")
    spread = 2.0 * float(np.std(arr, ddof=1)) if arr.size > 1 else 0.0
    return CellResult(mean=float(arr.mean()), dispersion=spread, values=[float(v) for v in arr])


def repeat_seeds(seed: int, repeats: int = REPEATS) -> List[int]:
    return [int(rng_for(seed, "repeat", r).integers(2 ** 31)) for r in range(repeats)]


def cells_from(run: Callable[[int], CellResult], ns: Iterable[int] = N_VALUES) -> Dict[int, Optional[CellResult]]:
    """``run(n)`` per n; a protocol error leaves the cell empty."""
    out: Dict[int, Optional[CellResult]] = {}
    for n in ns:
        try:
            out[n] = run(n)
        except ProtocolError:
            out[n] = None
    return out


def cells_over_n(score: Callable[[int, int], float], seed: int, ns: Iterable[int] = N_VALUES,
                 repeats: int = REPEATS) -> Dict[int, Optional[CellResult]]:
    """``score(n, repeat_seed)`` summarized per n."""
    seeds = repeat_seeds(seed, repeats)
    return cells_from(lambda n: summarize([score(n, s) for s in seeds]), ns)
