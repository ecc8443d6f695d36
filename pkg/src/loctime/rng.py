"""Counter-keyed random streams.

Every random draw in the package is addressed by (master seed, path index,
chunk, level).  Each address maps to its own Philox key, so any chunk of any
path can be regenerated in isolation and in any order.
"""
import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15

# bridge levels per chunk are addressed as chunk * LEVEL_SLOTS + level
LEVEL_SLOTS = 64


def splitmix64(x: int) -> int:
    """The SplitMix64 finalizer; a bijection on 64-bit integers."""
    z = (x + GOLDEN) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def per_path_seed(master_seed: int, path_index: int) -> int:
    """Deterministic 64-bit seed for one path.

    For a fixed master seed the map ``path_index -> seed`` is a bijection on
    64-bit integers, so distinct indices never collide.
    """
    if path_index < 0:
        raise ValueError("path_index must be >= 0")
    base = splitmix64(master_seed & MASK64)
    return splitmix64((base + (path_index & MASK64) * GOLDEN) & MASK64)


def stream(path_seed: int, chunk: int, level: int) -> np.random.Generator:
    """Generator for one (chunk, level) cell of a path.

    level 0 holds the coarse increments; level l >= 1 the bridge midpoints of
    the l-th dyadic refinement.
    """
    if not 0 <= level < LEVEL_SLOTS:
        raise ValueError(f"level must lie in [0, {LEVEL_SLOTS})")
    key = (path_seed & MASK64) | ((chunk * LEVEL_SLOTS + level) << 64)
    return np.random.Generator(np.random.Philox(key=key))
