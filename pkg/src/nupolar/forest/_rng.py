"""Counter-based 64-bit PRNG used inside tree growth.

Both the compiled and the pure-Python growth kernels must consume random
draws identically, or grown trees would diverge between them.  numpy
Generators cannot be called cheaply from nogil code, so tree growth uses a
tiny counter-based splitmix64 stream instead: draw i is a pure function of
(seed, i), which also lets the numpy fallback generate whole blocks of
draws vectorised.  Statistical quality is more than adequate for bootstrap
indices and feature subsets.

The C implementation in _grow_cy.pyx mirrors these functions line for
line; test_forest asserts cross-backend equality of whole grown trees.
"""
from __future__ import annotations

import numpy as np

MASK = (1 << 64) - 1
GAMMA = 0x9E3779B97F4A7C15
MULT1 = 0xBF58476D1CE4E5B9
MULT2 = 0x94D049BB133111EB


def mix64(seed: int, counter: int) -> int:
    """Draw number ``counter`` (0-based) of the stream keyed by ``seed``."""
    z = (seed + (counter + 1) * GAMMA) & MASK
    z = ((z ^ (z >> 30)) * MULT1) & MASK
    z = ((z ^ (z >> 27)) * MULT2) & MASK
    return z ^ (z >> 31)


def bounded(seed: int, counter: int, bound: int) -> int:
    """Draw in [0, bound) via modulo; bias is O(bound / 2^64), negligible."""
    return mix64(seed, counter) % bound


def mix_block(seed: int, start: int, count: int) -> np.ndarray:
    """Vectorised draws for counters start..start+count-1 (uint64 array)."""
    ctrs = np.arange(start + 1, start + count + 1, dtype=np.uint64)
    z = np.uint64(seed) + ctrs * np.uint64(GAMMA)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(MULT1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(MULT2)
    return z ^ (z >> np.uint64(31))
