"""Deterministic counter-based random number generation.

Simulation results must be byte-identical across runs, platforms and degrees
of parallelism, so nothing here depends on a platform RNG or on global state.
The generator is a keyed SplitMix64 stream:

    mix64(z):  the SplitMix64 finalizer
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9   (mod 2^64)
        z = (z ^ (z >> 27)) * 0x94D049BB133111EB   (mod 2^64)
        z = z ^ (z >> 31)

    key derivation: starting from mix64(seed), each path component folds in
        integers:  key = mix64(key ^ mix64(component + GOLDEN))
        strings:   fold the byte length, then each UTF-8 byte the same way

    draw i of a stream:  mix64((key + (i + 1) * GOLDEN) mod 2^64)

GOLDEN is the 64-bit golden-ratio constant 0x9E3779B97F4A7C15.  Because every
draw is a pure function of (key, counter), independent work units can consume
their own streams in any order without affecting each other.
"""

from __future__ import annotations

import math

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def mix64(z: int) -> int:
    """SplitMix64 finalizer over unsigned 64-bit integers."""
    z &= _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def _fold(key: int, part: int | str) -> int:
    if isinstance(part, str):
        data = part.encode("utf-8")
        key = mix64(key ^ mix64(len(data) + _GOLDEN))
        for byte in data:
            key = mix64(key ^ mix64(byte + _GOLDEN))
        return key
    return mix64(key ^ mix64((int(part) + _GOLDEN) & _MASK64))


class SplitRng:
    """A splittable, counter-based random stream.

    ``SplitRng(seed, *path)`` identifies one stream; ``child(*path)`` derives
    an independent stream without disturbing the parent's counter.
    """

    __slots__ = ("_key", "_count")

    def __init__(self, seed: int, *path: int | str):
        key = mix64(seed & _MASK64)
        for part in path:
            key = _fold(key, part)
        self._key = key
        self._count = 0

    def child(self, *path: int | str) -> "SplitRng":
        rng = SplitRng.__new__(SplitRng)
        key = self._key
        for part in path:
            key = _fold(key, part)
        rng._key = key
        rng._count = 0
        return rng

    def next_u64(self) -> int:
        self._count += 1
        return mix64((self._key + self._count * _GOLDEN) & _MASK64)

    def unit(self) -> float:
        """Uniform float in [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * (2.0 ** -53)

    def uniform(self, low: float, high: float) -> float:
        return low + (high - low) * self.unit()

    def normal(self, mean: float = 0.0, sd: float = 1.0) -> float:
        """Gaussian draw via the Box-Muller transform (two u64 draws)."""
        u1 = (self.next_u64() >> 11) * (2.0 ** -53)
        u2 = (self.next_u64() >> 11) * (2.0 ** -53)
        if u1 <= 0.0:
            u1 = 2.0 ** -53
        radius = math.sqrt(-2.0 * math.log(u1))
        return mean + sd * radius * math.cos(2.0 * math.pi * u2)

    def randint(self, low: int, high: int) -> int:
        """Uniform integer in [low, high], unbiased via rejection."""
        if high < low:
            raise ValueError(f"empty integer range [{low}, {high}]")
        span = high - low + 1
        threshold = (1 << 64) % span
        while True:
            value = self.next_u64()
            if value >= threshold:
                return low + value % span
