"""Portable pseudo-random numbers.

Every random draw in the package goes through :class:`SplitMix64` so that a
seed reproduces the same shuffles, splits and synthetic scores regardless of
the numpy version or platform.  The generator is Steele, Lea & Flood's
SplitMix64::

    state  += 0x9E3779B97F4A7C15
    z       = state
    z       = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
    z       = (z ^ (z >> 27)) * 0x94D049BB133111EB
    output  = z ^ (z >> 31)

Since the state is a plain counter the i-th output is a pure function of
``seed + i * gamma``, which lets us produce blocks of outputs with vectorised
uint64 arithmetic (numpy array arithmetic wraps modulo 2**64).

Derived streams:

* uniform doubles: ``(x >> 11) * 2**-53`` in [0, 1);
* bounded integers: ``floor(u * n)`` for a uniform double ``u``;
* standard normals: Box-Muller on consecutive uniform pairs.
"""

from __future__ import annotations

import numpy as np

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_MASK64 = (1 << 64) - 1


class SplitMix64:
    """Counter-based SplitMix64 stream.

    Parameters
    ----------
    seed : int
        Unsigned seed; reduced modulo 2**64.
    """

    def __init__(self, seed: int = 42):
        if seed < 0:
            raise ValueError(f"seed must be non-negative, got {seed}")
        self.seed = int(seed) & _MASK64
        self._counter = 0

    def next_uint64(self, size: int) -> np.ndarray:
        """Return the next ``size`` raw 64-bit outputs."""
        idx = np.arange(self._counter + 1, self._counter + size + 1, dtype=np.uint64)
        self._counter += size
        z = np.uint64(self.seed) + idx * _GAMMA
        z = (z ^ (z >> np.uint64(30))) * _MIX1
        z = (z ^ (z >> np.uint64(27))) * _MIX2
        return z ^ (z >> np.uint64(31))

    def random(self, size: int) -> np.ndarray:
        """Uniform doubles in [0, 1) with 53 random bits."""
        x = self.next_uint64(size) >> np.uint64(11)
        return x.astype(np.float64) * 2.0**-53

    def integers(self, high: int, size: int) -> np.ndarray:
        """Integers uniform on {0, ..., high - 1}."""
        if high < 1:
            raise ValueError("high must be >= 1")
        out = np.floor(self.random(size) * high).astype(np.int64)
        return np.minimum(out, high - 1)

    def standard_normal(self, size: int) -> np.ndarray:
        n_pairs = (size + 1) // 2
        u = self.random(2 * n_pairs)
        u1 = 1.0 - u[0::2]  # (0, 1], keeps log finite
        u2 = u[1::2]
        rad = np.sqrt(-2.0 * np.log(u1))
        out = np.empty(2 * n_pairs)
        out[0::2] = rad * np.cos(2.0 * np.pi * u2)
        out[1::2] = rad * np.sin(2.0 * np.pi * u2)
        return out[:size]

    def permutation(self, n: int) -> np.ndarray:
        """Fisher-Yates shuffle of ``range(n)``."""
        perm = np.arange(n, dtype=np.int64)
        if n < 2:
            return perm
        u = self.random(n - 1)
        for step, i in enumerate(range(n - 1, 0, -1)):
            j = min(int(u[step] * (i + 1)), i)
            perm[i], perm[j] = perm[j], perm[i]
        return perm
