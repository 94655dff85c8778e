"""Stateless stream splitting.

A stream is identified by the master seed plus an integer key path
(e.g. ``(purpose, n, block)``); the generator for a key never depends on
which worker asks for it or in which order.
"""

import numpy as np

# key-path prefixes separating independent uses of the master seed
REPLICATIONS = 1
COHERENCY = 2
DIRECTIONS = 3


def make_stream(seed: int, *key: int) -> np.random.Generator:
    if seed is None:
        raise ValueError("a master seed is required")
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))
