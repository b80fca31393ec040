"""Deterministic random substreams.

Unit ``i`` of a run with master seed ``s`` draws from its own stream, keyed
by a SplitMix64 mix of ``(s, domain, i)``. Keys never depend on how work is
split across workers, so outputs are identical for any worker count.

The derivation is frozen: changing it changes every published output.
"""

from __future__ import annotations

import random

import numpy as np

MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15

# Domain tags keep streams for different purposes disjoint under the same seed.
DOMAIN_SAMPLE = 1
DOMAIN_GENERATE = 2
DOMAIN_COMPARE = 3
DOMAIN_TRANSITION = 4


def splitmix64(x: int) -> int:
    """SplitMix64 finalizer (Steele, Lea & Flood); a bijection on 64-bit integers."""
    x = (x + _GOLDEN) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def mix(seed: int, *keys: int) -> int:
    """64-bit key for a substream, chaining SplitMix64 over the seed and each key."""
    if not 0 <= seed <= MASK64:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    h = splitmix64(seed)
    for k in keys:
        h = splitmix64(h ^ (k & MASK64))
    return h


def substream(seed: int, index: int, domain: int = DOMAIN_GENERATE) -> random.Random:
    """Scalar uniform stream for work unit ``index``.

    ``random.Random`` seeded from an int is reproducible across Python versions.
    """
    return random.Random(mix(seed, domain, index))


def generator(seed: int, index: int, domain: int = DOMAIN_COMPARE) -> np.random.Generator:
    """Vectorized numpy generator for work unit ``index``."""
    return np.random.Generator(np.random.PCG64(mix(seed, domain, index)))
