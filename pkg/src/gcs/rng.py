"""Counter-based deterministic random streams.

Every random decision in this package is a pure function of a 64-bit key and
a draw counter, so results never depend on evaluation order, batching, or
parallelism.  The construction is the splitmix64 finalizer applied to a
Weyl sequence:

    draw(key, n)  = mix64(key + (n + 1) * GOLDEN   mod 2^64)
    child(seed,i) = mix64((seed XOR SPLIT_SALT) + (i + 1) * GOLDEN  mod 2^64)

``mix64`` is the standard splitmix64 avalanche function; GOLDEN is the odd
64-bit golden-ratio constant; SPLIT_SALT separates the substream-derivation
domain from the draw domain so a child seed never collides with a parent
draw.  Scalar (Python int) and vectorized (uint64 ndarray) variants are
bit-identical, which the test suite checks.
"""

from __future__ import annotations

import numpy as np

MASK64 = 0xFFFFFFFFFFFFFFFF
GOLDEN = 0x9E3779B97F4A7C15
SPLIT_SALT = 0x5851F42D4C957F2D

_U53_SCALE = 2.0**-53


def mix64(x: int) -> int:
    """splitmix64 finalizer: a 64-bit bijection with full avalanche."""
    x &= MASK64
    x ^= x >> 30
    x = (x * 0xBF58476D1CE4E5B9) & MASK64
    x ^= x >> 27
    x = (x * 0x94D049BB133111EB) & MASK64
    x ^= x >> 31
    return x


def mix64_array(x: np.ndarray) -> np.ndarray:
    """Vectorized :func:`mix64` over a uint64 array (wrapping arithmetic)."""
    x = x.astype(np.uint64, copy=True)
    x ^= x >> np.uint64(30)
    x *= np.uint64(0xBF58476D1CE4E5B9)
    x ^= x >> np.uint64(27)
    x *= np.uint64(0x94D049BB133111EB)
    x ^= x >> np.uint64(31)
    return x


def seed_key(seed: int) -> int:
    """Map an arbitrary integer seed to the 64-bit key of its draw stream."""
    return mix64(seed & MASK64)


def split_seed(seed: int, index: int) -> int:
    """Seed of the ``index``-th substream of ``seed`` (index >= 0)."""
    if index < 0:
        raise ValueError(f"substream index must be >= 0, got {index}")
    return mix64(((seed & MASK64) ^ SPLIT_SALT) + (index + 1) * GOLDEN)


def split_seed_array(seed: int, indices: np.ndarray) -> np.ndarray:
    """Vectorized :func:`split_seed` for many substream indices."""
    idx = np.asarray(indices, dtype=np.uint64)
    base = np.uint64((seed & MASK64) ^ SPLIT_SALT)
    return mix64_array(base + (idx + np.uint64(1)) * np.uint64(GOLDEN))


def draw_u64(key: int, counter: int) -> int:
    """The ``counter``-th raw 64-bit draw of the stream with this key."""
    return mix64(key + (counter + 1) * GOLDEN)


def unit_draw(key: int, counter: int) -> float:
    """The ``counter``-th draw as a float in [0, 1) with 53-bit resolution."""
    return (draw_u64(key, counter) >> 11) * _U53_SCALE


def unit_draws_for_keys(keys: np.ndarray, counter: int) -> np.ndarray:
    """One unit draw at a fixed counter for each key in a uint64 array."""
    k = np.asarray(keys, dtype=np.uint64)
    raw = mix64_array(k + np.uint64((counter + 1) * GOLDEN & MASK64))
    return (raw >> np.uint64(11)).astype(np.float64) * _U53_SCALE


def unit_draws_for_counters(key: int, counters: np.ndarray) -> np.ndarray:
    """Unit draws of a single stream at many counters."""
    c = np.asarray(counters, dtype=np.uint64)
    raw = mix64_array(np.uint64(key & MASK64) + (c + np.uint64(1)) * np.uint64(GOLDEN))
    return (raw >> np.uint64(11)).astype(np.float64) * _U53_SCALE


def draw_indices(population: int, count: int, seed: int) -> np.ndarray:
    """``count`` uniform draws (with replacement) from range(population).

    Uses the seed's draw stream at counters 0..count-1.  The modulo bias is
    at most population / 2^64 per draw, negligible for any realistic corpus.
    """
    if population <= 0:
        raise ValueError("population must be positive")
    if count < 0:
        raise ValueError("count must be >= 0")
    key = seed_key(seed)
    raw = mix64_array(
        np.uint64(key) + (np.arange(1, count + 1, dtype=np.uint64)) * np.uint64(GOLDEN)
    )
    return (raw % np.uint64(population)).astype(np.int64)
