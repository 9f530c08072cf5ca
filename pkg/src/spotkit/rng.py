"""Portable 64-bit random number generation.

Every stochastic routine in the package draws from :class:`XorShift64Star`
so that seeded outputs are byte-stable across numpy versions and platforms.

Constants
---------
* seeding: SplitMix64 (golden gamma ``0x9E3779B97F4A7C15``, mixers
  ``0xBF58476D1CE4E5B9`` and ``0x94D049BB133111EB``)
* stepping: xorshift64* with shifts (12, 25, 27) and output multiplier
  ``0x2545F4914F6CDD1D``

Bulk draws (:meth:`XorShift64Star.uniform_array`) run 256 independent lanes
in lock-step with numpy ``uint64`` arithmetic; lane states are SplitMix64
expansions of one scalar draw, so bulk output is still a pure function of
the seed.
"""
from __future__ import annotations

import math

import numpy as np

MASK64 = 0xFFFFFFFFFFFFFFFF
GOLDEN_GAMMA = 0x9E3779B97F4A7C15
MIX1 = 0xBF58476D1CE4E5B9
MIX2 = 0x94D049BB133111EB
XS_MULT = 0x2545F4914F6CDD1D
XS_SHIFTS = (12, 25, 27)
LANES = 256

_INV53 = 1.0 / (1 << 53)


def splitmix64(x: int) -> int:
    """One SplitMix64 output for state ``x``."""
    z = (x + GOLDEN_GAMMA) & MASK64
    z = ((z ^ (z >> 30)) * MIX1) & MASK64
    z = ((z ^ (z >> 27)) * MIX2) & MASK64
    return z ^ (z >> 31)


def derive_seed(master: int, *path: int) -> int:
    """Derive an independent stream seed from a master seed and an index path.

    ``derive_seed(seed, i)`` is what per-image generators use, so scene ``i``
    is identical whether generated alone, serially or in parallel.
    """
    s = splitmix64(master & MASK64)
    for p in path:
        s = splitmix64(s ^ splitmix64(p & MASK64))
    return s


def _splitmix64_array(x: np.ndarray) -> np.ndarray:
    z = x + np.uint64(GOLDEN_GAMMA)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(MIX1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(MIX2)
    return z ^ (z >> np.uint64(31))


class XorShift64Star:
    """xorshift64* generator with SplitMix64 seeding."""

    def __init__(self, seed: int):
        state = splitmix64(int(seed) & MASK64)
        # xorshift has a single absorbing state at zero
        self._state = state or GOLDEN_GAMMA

    def next_u64(self) -> int:
        s = self._state
        s ^= s >> XS_SHIFTS[0]
        s ^= (s << XS_SHIFTS[1]) & MASK64
        s ^= s >> XS_SHIFTS[2]
        self._state = s
        return (s * XS_MULT) & MASK64

    def random(self) -> float:
        """Uniform float in [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * _INV53

    def uniform(self, low: float, high: float) -> float:
        return low + (high - low) * self.random()

    def randint(self, low: int, high: int) -> int:
        """Uniform integer in the closed range [low, high] (rejection sampled)."""
        if high < low:
            raise ValueError(f"empty range [{low}, {high}]")
        n = high - low + 1
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            u = self.next_u64()
            if u < limit:
                return low + u % n

    def choice(self, seq):
        return seq[self.randint(0, len(seq) - 1)]

    def normal(self) -> float:
        """Standard normal deviate (Box-Muller, one value per call)."""
        u1 = 1.0 - self.random()
        u2 = self.random()
        return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randint(0, i)
            items[i], items[j] = items[j], items[i]

    # -- bulk draws -------------------------------------------------------
    def u64_array(self, n: int) -> np.ndarray:
        if n < 0:
            raise ValueError("n must be non-negative")
        block_seed = self.next_u64()
        lanes = np.arange(LANES, dtype=np.uint64) * np.uint64(GOLDEN_GAMMA)
        s = _splitmix64_array(lanes + np.uint64(block_seed))
        s[s == 0] = np.uint64(GOLDEN_GAMMA)
        steps = -(-n // LANES)
        out = np.empty((steps, LANES), dtype=np.uint64)
        a, b, c = (np.uint64(k) for k in XS_SHIFTS)
        mult = np.uint64(XS_MULT)
        for k in range(steps):
            s ^= s >> a
            s ^= s << b
            s ^= s >> c
            out[k] = s * mult
        return out.reshape(-1)[:n]

    def uniform_array(self, shape, low: float = 0.0, high: float = 1.0) -> np.ndarray:
        shape = (shape,) if isinstance(shape, int) else tuple(shape)
        n = int(np.prod(shape, dtype=np.int64))
        u = (self.u64_array(n) >> np.uint64(11)).astype(np.float64) * _INV53
        return (low + (high - low) * u).reshape(shape)

    def normal_array(self, shape) -> np.ndarray:
        shape = (shape,) if isinstance(shape, int) else tuple(shape)
        n = int(np.prod(shape, dtype=np.int64))
        m = -(-n // 2)
        u = self.uniform_array(2 * m)
        r = np.sqrt(-2.0 * np.log(1.0 - u[:m]))
        theta = 2.0 * np.pi * u[m:]
        z = np.concatenate([r * np.cos(theta), r * np.sin(theta)])
        return z[:n].reshape(shape)
