"""Counter-based random streams shared by the Python and kernel layers.

All stochastic decisions in the engine come from splitmix64 streams addressed
by (seed, counter).  Because a draw depends only on its counter, the same
stream can be consumed sequentially (numba kernels), vectorised (numpy batch
sampling), or out of order, and every path produces identical numbers.  This
is what makes results independent of worker count and scheduling.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB

# Stream tags keep independent purposes from colliding on the same counter.
STREAM_REALIZATION = 0x52_45_41_4C
STREAM_PAIRS = 0x50_41_49_52
STREAM_SAMPLES = 0x53_41_4D_50
STREAM_POINT = 0x50_4F_49_4E


def mix64(x: int) -> int:
    """splitmix64 finaliser on a 64-bit integer."""
    z = x & MASK64
    z = ((z ^ (z >> 30)) * _MIX1) & MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & MASK64
    return z ^ (z >> 31)


def derive(seed: int, *indices: int) -> int:
    """Derive an independent substream seed from (seed, indices).

    The chain is order-sensitive: derive(s, a, b) != derive(s, b, a).
    """
    h = mix64(seed)
    for v in indices:
        h = mix64((h + GOLDEN + mix64((v + GOLDEN) & MASK64)) & MASK64)
    return h


def draw_u64(seed: int, counter: int) -> int:
    """The counter-th raw 64-bit draw of the stream with the given seed."""
    return mix64((seed + (counter + 1) * GOLDEN) & MASK64)


def draw_uniform(seed: int, counter: int) -> float:
    """The counter-th uniform double in [0, 1)."""
    return (draw_u64(seed, counter) >> 11) * 2.0**-53


def draw_u64_array(seed: int, counters: np.ndarray) -> np.ndarray:
    """Vectorised draw_u64 over an array of counters (wraparound intended)."""
    with np.errstate(over="ignore"):
        z = (np.uint64(seed) + (counters.astype(np.uint64) + np.uint64(1)) * np.uint64(GOLDEN))
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
        return z ^ (z >> np.uint64(31))


def draw_uniform_array(seed: int, counters: np.ndarray) -> np.ndarray:
    """Vectorised draw_uniform over an array of counters."""
    return (draw_u64_array(seed, counters) >> np.uint64(11)) * 2.0**-53


def generator(seed: int) -> np.random.Generator:
    """A numpy Generator seeded from this stream (for non-kernel sampling)."""
    return np.random.Generator(np.random.PCG64(seed & MASK64))
