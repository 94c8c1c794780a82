"""Derivation of independent RNG streams from a single master seed.

All randomness in the package flows from one unsigned 64-bit master seed.
Sub-streams are derived through ``numpy.random.SeedSequence`` keyed on a
small integer domain tag plus index path, so parallel workers get
statistically independent streams whose content does not depend on
scheduling order.
"""
from __future__ import annotations

import numpy as np

# Domain tags keep streams for unrelated purposes disjoint.
EVENT = 1       # per-event generation stream
LABELS = 2      # dataset-level label shuffle
TREE = 3        # per-tree growth stream
CV_PARTITION = 4  # per-repetition fold assignment
FIT = 5         # per-(repetition, fold) forest seed
NOISE = 6       # per-noise-level PIV perturbation


def child_seed(seed: int, *path: int) -> int:
    """A u64 seed for the sub-stream identified by ``path`` under ``seed``."""
    ss = np.random.SeedSequence(entropy=(int(seed),) + tuple(int(p) for p in path))
    return int(ss.generate_state(1, np.uint64)[0])


def child_rng(seed: int, *path: int) -> np.random.Generator:
    """A numpy Generator for the sub-stream identified by ``path``."""
    ss = np.random.SeedSequence(entropy=(int(seed),) + tuple(int(p) for p in path))
    return np.random.Generator(np.random.PCG64(ss))
