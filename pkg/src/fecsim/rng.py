"""Deterministic random number generation shared by the emulator, the
coding layer and the experiment harness.

Two tiny generators are used on purpose instead of ``random.Random``:

* splitmix64 drives every loss model and all seed derivation.  It is a
  counter-based generator, so independent streams can be split off a
  single top-level seed without correlation surprises.
* xorshift32 expands a 32-bit seed into coding coefficients.  The seed
  has to travel inside a repair identifier, so it must be small.

Both are fixed algorithms with published reference outputs; traces are
reproducible across platforms and Python versions.
"""

from __future__ import annotations

import numpy as np

_M64 = (1 << 64) - 1
_M32 = (1 << 32) - 1

SPLITMIX64_GAMMA = 0x9E3779B97F4A7C15


def splitmix64_mix(state: int) -> int:
    """The splitmix64 output function applied to an already-advanced state."""
    z = state & _M64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _M64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _M64
    return (z ^ (z >> 31)) & _M64


class SplitMix64:
    """Sequential splitmix64 stream."""

    def __init__(self, seed: int):
        self._state = seed & _M64

    def next_u64(self) -> int:
        self._state = (self._state + SPLITMIX64_GAMMA) & _M64
        return splitmix64_mix(self._state)

    def next_float(self) -> float:
        """Uniform in [0, 1)."""
        return self.next_u64() / 2.0**64

    def next_floats(self, count: int) -> np.ndarray:
        """``count`` uniforms in one shot, identical to ``count`` calls of
        :meth:`next_float`.

        splitmix64 is counter based: output i is mix(seed + i * gamma), so
        the whole batch is a vectorised mix over an arange.  uint64
        arithmetic wraps modulo 2**64 exactly like the scalar path.
        """
        if count <= 0:
            return np.empty(0, dtype=np.float64)
        steps = np.arange(1, count + 1, dtype=np.uint64)
        z = np.uint64(self._state) + np.uint64(SPLITMIX64_GAMMA) * steps
        self._state = (self._state + SPLITMIX64_GAMMA * count) & _M64
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        z = z ^ (z >> np.uint64(31))
        return z.astype(np.float64) / 2.0**64


def derive_seed(seed: int, *salts: int) -> int:
    """Derive an independent 64-bit seed from a top-level seed and salts.

    Used to give every repetition, connection and loss model its own
    stream while staying a pure function of the top-level seed.
    """
    x = seed & _M64
    for salt in salts:
        x = splitmix64_mix((x + SPLITMIX64_GAMMA * (salt + 1)) & _M64)
    return x


def xorshift32(x: int) -> int:
    x &= _M32
    x ^= (x << 13) & _M32
    x ^= x >> 17
    x ^= (x << 5) & _M32
    return x
