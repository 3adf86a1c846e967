"""Scene sampling and the captioner's noisy observation of a scene."""
from typing import Dict, Iterator, Mapping

import numpy as np

from ..errors import ConfigError
from ..schemas import Scene
from ..utils.seeding import rng_for
from .grammar import SLOTS


def _check(inventories: Mapping[str, int]) -> None:
    for slot in SLOTS:
        size = inventories.get(slot, 0)
        if size <= 0:
            raise ConfigError(f"inventories.{slot}", "slot inventory is empty")


def sample_scene(inventories: Mapping[str, int], seed: int, scene_id: int = 0) -> Scene:
    """Uniform over each inventory; the object is drawn over objects plus "none"."""
    _check(inventories)
    rng = rng_for(seed, "scene", scene_id)
    n_obj = inventories["object"]
    obj = int(rng.integers(n_obj + 1))
    return Scene(
        scene_id=scene_id,
        agent=int(rng.integers(inventories["agent"])),
        attribute=int(rng.integers(inventories["attribute"])),
        action=int(rng.integers(inventories["action"])),
        object=None if obj == n_obj else obj,
        location=int(rng.integers(inventories["location"])),
    )


def sample_scenes(inventories: Mapping[str, int], seed: int, n: int, start_id: int = 0) -> Iterator[Scene]:
    for scene_id in range(start_id, start_id + n):
        yield sample_scene(inventories, seed, scene_id)


def confusable(value: int, size: int) -> tuple:
    """Ring neighbours of a slot value."""
    if size < 2:
        return ()
    if size == 2:
        return ((value + 1) % size,)
    return ((value - 1) % size, (value + 1) % size)


def observe_scene(scene: Scene, p_confuse: float, rng: np.random.Generator,
                  inventories: Mapping[str, int]) -> Scene:
    """Each present slot is misread as a ring neighbour with probability ``p_confuse``."""
    if not 0.0 <= p_confuse <= 0.5:
        raise ConfigError("p_confuse", "must lie in [0, 0.5]")
    observed: Dict[str, object] = {"scene_id": scene.scene_id}
    for slot, value in scene.slots().items():
        if value is not None and rng.random() < p_confuse:
            options = confusable(value, inventories[slot])
            if options:
                value = options[int(rng.integers(len(options)))]
        observed[slot] = value
    return Scene(**observed)
