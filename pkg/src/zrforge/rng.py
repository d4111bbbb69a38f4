"""Seedable PRNG with a fixed, documented algorithm.

All randomness in this project (data generation, parameter init, batch
shuffling, mock encoding) flows through SplitMix64 so that runs are
reproducible from a single 64-bit seed and the byte streams can be
re-derived by any implementation of the same algorithm:

    state  = (state + 0x9E3779B97F4A7C15) mod 2^64
    z      = state
    z      = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9  mod 2^64
    z      = (z ^ (z >> 27)) * 0x94D049BB133111EB  mod 2^64
    output = z ^ (z >> 31)

Doubles are built as (output >> 11) * 2^-53, bounded integers by rejection
sampling, and normals by Box-Muller on consecutive uniforms.
"""

from __future__ import annotations

import math

import numpy as np

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x00000100000001B3


def _mix(z: int) -> int:
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK64
    return z ^ (z >> 31)


def fnv1a64(data: bytes) -> int:
    """FNV-1a 64-bit hash, used to derive stream seeds from labels."""
    h = _FNV_OFFSET
    for b in data:
        h = ((h ^ b) * _FNV_PRIME) & _MASK64
    return h


def derive_seed(seed: int, *labels: str) -> int:
    """Derive an independent stream seed from a root seed and string labels.

    Independent derivation (rather than drawing from one shared stream)
    keeps every consumer's stream stable when unrelated consumers are
    added or removed.
    """
    h = _mix(seed & _MASK64)
    for label in labels:
        h = _mix(h ^ fnv1a64(label.encode("utf-8")))
    return h


class SplitMix64:
    """Sequential SplitMix64 stream."""

    def __init__(self, seed: int):
        self._state = seed & _MASK64
        self._spare_normal: float | None = None

    def next_u64(self) -> int:
        self._state = (self._state + _GOLDEN) & _MASK64
        return _mix(self._state)

    def uniform(self) -> float:
        """Uniform double in [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * (2.0 ** -53)

    def below(self, n: int) -> int:
        """Uniform integer in [0, n), unbiased via rejection."""
        if n <= 0:
            raise ValueError("bound must be positive")
        threshold = (_MASK64 + 1) - ((_MASK64 + 1) % n)
        while True:
            x = self.next_u64()
            if x < threshold:
                return x % n

    def choice(self, seq):
        return seq[self.below(len(seq))]

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates."""
        for i in range(len(items) - 1, 0, -1):
            j = self.below(i + 1)
            items[i], items[j] = items[j], items[i]

    def normal(self) -> float:
        """Standard normal via Box-Muller."""
        if self._spare_normal is not None:
            z = self._spare_normal
            self._spare_normal = None
            return z
        # u1 in (0, 1] so log() is finite.
        u1 = 1.0 - self.uniform()
        u2 = self.uniform()
        r = math.sqrt(-2.0 * math.log(u1))
        self._spare_normal = r * math.sin(2.0 * math.pi * u2)
        return r * math.cos(2.0 * math.pi * u2)

    def normal_array(self, n: int) -> np.ndarray:
        return np.array([self.normal() for _ in range(n)], dtype=np.float64)


def uniform_array(seed: int, n: int) -> np.ndarray:
    """Vectorized counter-mode SplitMix64: element i is the i-th output of
    the sequential stream with the same seed."""
    state = (np.uint64(seed) + (np.arange(1, n + 1, dtype=np.uint64)) * np.uint64(_GOLDEN))
    with np.errstate(over="ignore"):
        z = state
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
        z = z ^ (z >> np.uint64(31))
    return (z >> np.uint64(11)).astype(np.float64) * (2.0 ** -53)
