"""Seed handling on top of numpy SeedSequence."""

from typing import Any

import numpy as np


def as_seed_sequence(seed: Any) -> np.random.SeedSequence:
    """Accept an int, a sequence of ints or a SeedSequence.

    A SeedSequence is copied, so spawning from the result never advances the caller's
    object and the same seed always yields the same children.
    """
    if isinstance(seed, np.random.SeedSequence):
        return np.random.SeedSequence(
            seed.entropy, spawn_key=seed.spawn_key, pool_size=seed.pool_size
        )
    return np.random.SeedSequence(seed)


def epoch_seed(seed: Any, index: int) -> np.random.SeedSequence:
    """The ``index``-th child of ``seed``, as ``SeedSequence.spawn`` would produce it.

    Unlike ``spawn`` this does not advance the parent's child counter.
    """
    parent = as_seed_sequence(seed)
    return np.random.SeedSequence(
        parent.entropy, spawn_key=(*parent.spawn_key, index), pool_size=parent.pool_size
    )
