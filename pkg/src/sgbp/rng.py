"""Counter-based random streams (Philox) keyed by integer tuples.

Every consumer derives its own stream from ``(seed, *keys)``, so results do not
depend on the order in which independent consumers run.
"""
from __future__ import annotations

import numpy as np


def philox_key(seed: int, *keys: int) -> int:
    words = np.random.SeedSequence([int(seed), *map(int, keys)]).generate_state(2, np.uint64)
    return int(words[0]) | (int(words[1]) << 64)


def stream(seed: int, *keys: int) -> np.random.Generator:
    """Sequential stream for ``(seed, *keys)``."""
    return np.random.Generator(np.random.Philox(key=philox_key(seed, *keys)))


def uniform_at(seed: int, keys: tuple[int, ...], counter: tuple[int, ...], low=0.0, high=1.0) -> float:
    """One uniform draw addressed directly by a counter of up to four words."""
    words = list(counter) + [0] * (4 - len(counter))
    bitgen = np.random.Philox(key=philox_key(seed, *keys), counter=words)
    return float(np.random.Generator(bitgen).uniform(low, high))
