"""SplitMix64 generator and integer seed mixing.

Trajectory sampling and per-cell seed derivation use SplitMix64 (Steele,
Lea & Flood 2014; the reference constants below) so the streams are fixed
by this file alone and do not depend on numpy's generator versioning.

``mix_seed(root, *parts)`` folds each part into the state with one
SplitMix64 finalizer round::

    h = fmix(root)
    for p in parts:
        h = fmix(h ^ (p + 0x9E3779B97F4A7C15))
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
ALGORITHM = "splitmix64-v1"


def _fmix(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def mix_seed(root: int, *parts: int) -> int:
    h = _fmix(root)
    for p in parts:
        h = _fmix(h ^ ((int(p) + GOLDEN) & MASK64))
    return h


class SplitMix64:
    """64-bit state generator. ``uniform()`` returns values in the open interval (0, 1)."""

    def __init__(self, seed: int):
        self.state = int(seed) & MASK64

    def next_u64(self) -> int:
        self.state = (self.state + GOLDEN) & MASK64
        return _fmix(self.state)

    def uniform(self) -> float:
        # 53 random bits, offset by half an ulp so 0 and 1 are never produced
        return ((self.next_u64() >> 11) + 0.5) * (1.0 / (1 << 53))

    def uniform_array(self, n: int, lo: float = 0.0, hi: float = 1.0) -> np.ndarray:
        u = np.array([self.uniform() for _ in range(n)], dtype=np.float64)
        return lo + (hi - lo) * u


def numpy_rng(seed: int) -> np.random.Generator:
    """Generator for training-time randomness (init, shuffles, masks, augmentation)."""
    return np.random.Generator(np.random.PCG64(int(seed) & MASK64))
