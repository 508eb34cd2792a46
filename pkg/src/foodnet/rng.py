"""SplitMix64 generator.

All randomness in the package (splits, shuffles, initialisation, dropout
masks, augmentation, k-means seeding) is drawn from this one generator so a
single 64-bit seed reproduces a run bit-for-bit on any platform.
"""
from __future__ import annotations

import math

import numpy as np

GAMMA = 0x9E3779B97F4A7C15
MASK64 = (1 << 64) - 1
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB


def mix64(z: int) -> int:
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def _mix64_array(z: np.ndarray) -> np.ndarray:
    # uint64 array arithmetic wraps modulo 2**64, which is exactly what we need
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_M1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_M2)
    return z ^ (z >> np.uint64(31))


class Rng:
    """Mutable splitmix64 stream.

    Methods advance ``state`` in place, the way ``numpy.random.Generator``
    does.  Use :func:`rng_uniform` for the pass-and-return style.
    """

    __slots__ = ("state",)

    def __init__(self, seed: int = 0):
        self.state = int(seed) & MASK64

    def __repr__(self):
        return f"Rng(state=0x{self.state:016x})"

    def __eq__(self, other):
        return isinstance(other, Rng) and other.state == self.state

    def copy(self) -> "Rng":
        return Rng(self.state)

    def next_u64(self) -> int:
        self.state = (self.state + GAMMA) & MASK64
        return mix64(self.state)

    def raw(self, n: int) -> np.ndarray:
        """Next ``n`` raw 64-bit outputs as a uint64 array."""
        n = int(n)
        if n <= 0:
            return np.zeros(0, dtype=np.uint64)
        steps = np.arange(1, n + 1, dtype=np.uint64) * np.uint64(GAMMA)
        states = steps + np.uint64(self.state)
        self.state = (self.state + n * GAMMA) & MASK64
        return _mix64_array(states)

    def uniform(self, n: int) -> np.ndarray:
        """``n`` float64 values in [0, 1) built from the top 53 bits."""
        return (self.raw(n) >> np.uint64(11)).astype(np.float64) * (2.0 ** -53)

    def random(self) -> float:
        return (self.next_u64() >> 11) * (2.0 ** -53)

    def uniform_range(self, low: float, high: float, n: int) -> np.ndarray:
        return low + (high - low) * self.uniform(n)

    def normal(self, n: int) -> np.ndarray:
        """Standard normals via Box-Muller; consumes 2n uniforms."""
        u = self.uniform(2 * int(n)).reshape(2, -1) if n else np.zeros((2, 0))
        radius = np.sqrt(-2.0 * np.log1p(-u[0]))
        return radius * np.cos(2.0 * math.pi * u[1])

    def integers(self, bound: int, n: int) -> np.ndarray:
        """``n`` integers uniform on [0, bound)."""
        out = np.floor(self.uniform(n) * bound).astype(np.int64)
        return np.minimum(out, bound - 1)

    def permutation(self, n: int) -> np.ndarray:
        """Fisher-Yates shuffle of ``range(n)``; consumes n-1 uniforms."""
        perm = np.arange(n)
        if n < 2:
            return perm
        u = self.uniform(n - 1)
        for k, i in enumerate(range(n - 1, 0, -1)):
            j = min(int(u[k] * (i + 1)), i)
            perm[i], perm[j] = perm[j], perm[i]
        return perm


def rng_uniform(rng: Rng, n: int) -> tuple[Rng, np.ndarray]:
    """Functional form: returns the advanced generator and the draws; ``rng`` is untouched."""
    nxt = rng.copy()
    values = nxt.uniform(n)
    return nxt, values
