"""Counter-based SplitMix64 streams.

Every random decision in fault injection and campaigns is a pure function of
``(key, counter)``:

    value(key, i) = mix64(key + (i + 1) * GOLDEN)

where ``mix64`` is the SplitMix64 finalizer.  Keys for sub-streams are derived
with :func:`derive`, which folds integers into a key one at a time:

    derive(key, a, b, ...) = mix64(... mix64(mix64(key ^ mix64(a + GOLDEN)) ^ mix64(b + GOLDEN)) ...)

All arithmetic is modulo 2**64, so any language with wrapping 64-bit unsigned
integers reproduces the same draws.
"""

from __future__ import annotations

import numpy as np

MASK64 = 0xFFFFFFFFFFFFFFFF
GOLDEN = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB


def mix64(z: int) -> int:
    """SplitMix64 finalizer on a Python int."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def derive(key: int, *indices: int) -> int:
    """Fold ``indices`` into ``key`` to obtain an independent stream key."""
    k = key & MASK64
    for i in indices:
        k = mix64(k ^ mix64((int(i) + GOLDEN) & MASK64))
    return k


def _mix64_array(z: np.ndarray) -> np.ndarray:
    z = z ^ (z >> np.uint64(30))
    z = z * np.uint64(_M1)
    z = z ^ (z >> np.uint64(27))
    z = z * np.uint64(_M2)
    return z ^ (z >> np.uint64(31))


def stream_u64(key: int, start: int, count: int) -> np.ndarray:
    """Draws ``value(key, start) .. value(key, start + count - 1)`` as uint64."""
    idx = np.arange(count, dtype=np.uint64) + np.uint64((start + 1) & MASK64)
    with np.errstate(over="ignore"):
        z = np.uint64(key & MASK64) + idx * np.uint64(GOLDEN)
        return _mix64_array(z)


def stream_uniform(key: int, start: int, count: int) -> np.ndarray:
    """Uniform doubles in [0, 1) from the top 53 bits of each draw."""
    return (stream_u64(key, start, count) >> np.uint64(11)).astype(np.float64) * 2.0**-53


class SplitMix64:
    """Sequential view over a counter-based stream (for scalar use)."""

    def __init__(self, seed: int):
        self.key = seed & MASK64
        self.counter = 0

    def next_u64(self) -> int:
        out = mix64(self.key + (self.counter + 1) * GOLDEN)
        self.counter += 1
        return out

    def next_float(self) -> float:
        return (self.next_u64() >> 11) * 2.0**-53
