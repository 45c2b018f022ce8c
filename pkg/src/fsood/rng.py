"""SplitMix64 stream, Fisher-Yates shuffling and Box-Muller normals.

Everything random in the package goes through here so that subsets, epoch
orders and synthetic fixtures are bit-identical across platforms.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15

_GAMMA = np.uint64(GOLDEN_GAMMA)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def _mix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


class SplitMix64:
    """Counter-based SplitMix64 generator.

    The i-th output (1-based) is ``mix(seed + i * GOLDEN_GAMMA)``, so blocks
    of outputs can be produced with vectorized uint64 arithmetic.
    """

    def __init__(self, seed: int):
        self.state = int(seed) & MASK64

    def next_u64(self, n: int) -> np.ndarray:
        """Return the next ``n`` raw 64-bit outputs and advance the stream."""
        if n < 0:
            raise ValueError("n must be non-negative")
        steps = np.arange(1, n + 1, dtype=np.uint64)
        with np.errstate(over="ignore"):
            z = np.uint64(self.state) + steps * _GAMMA
            out = _mix(z)
        self.state = (self.state + n * GOLDEN_GAMMA) & MASK64
        return out

    def next_uniform(self, n: int) -> np.ndarray:
        """Uniform doubles in (0, 1], 53 bits of resolution."""
        bits = self.next_u64(n) >> np.uint64(11)
        return (bits.astype(np.float64) + 1.0) * 2.0**-53

    def next_normal(self, n: int) -> np.ndarray:
        """Standard normals by Box-Muller; each pair of uniforms yields two."""
        pairs = (n + 1) // 2
        u = self.next_uniform(2 * pairs)
        u1, u2 = u[0::2], u[1::2]
        radius = np.sqrt(-2.0 * np.log(u1))
        angle = 2.0 * np.pi * u2
        out = np.empty(2 * pairs)
        out[0::2] = radius * np.cos(angle)
        out[1::2] = radius * np.sin(angle)
        return out[:n]


def fisher_yates(items, seed: int) -> list:
    """Shuffle a copy of ``items`` (Durstenfeld order, j = draw mod (i+1))."""
    out = list(items)
    n = len(out)
    if n < 2:
        return out
    draws = SplitMix64(seed).next_u64(n - 1)
    for step, i in enumerate(range(n - 1, 0, -1)):
        j = int(draws[step]) % (i + 1)
        out[i], out[j] = out[j], out[i]
    return out
