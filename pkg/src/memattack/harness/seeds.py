"""Sub-seed derivation with the public splitmix64 mixer."""

from __future__ import annotations

import numpy as np

MASK = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15


def splitmix64(x: int) -> int:
    z = (x + GOLDEN) & MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
    return z ^ (z >> 31)


def sub_seed(seed: int, *path: int) -> int:
    """Mix a root seed with a path of indices (cell, trial, ...)."""
    x = int(seed) & MASK
    for i in path:
        x = splitmix64(x ^ splitmix64(int(i) & MASK))
    return x


def rng_for(seed: int, *path: int) -> np.random.Generator:
    return np.random.default_rng(sub_seed(seed, *path))
