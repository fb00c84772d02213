"""Seed derivation for reproducible, parallel-safe random streams.

A random stream is a jax PRNG key. Every randomized object in the package is derived from a
master seed and an integer index, so trials can be replayed from the seeds stored in records.
"""

import os

from jax import random
from jaxtyping import PRNGKeyArray

MASK_64 = (1 << 64) - 1
MASK_63 = (1 << 63) - 1

# Child index offsets. Instance i uses children 2i and 2i+1 of the master.
NOISE_OFFSET = 1 << 32
CODEBOOK_OFFSET = 1 << 33
SHARED_OFFSET = 1 << 34
INIT_OFFSET = 1 << 35


def _mix64(x: int) -> int:
    """splitmix64 finalizer."""
    x = (x + 0x9E3779B97F4A7C15) & MASK_64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK_64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK_64
    return x ^ (x >> 31)


def child_seed(master: int, index: int) -> int:
    """Derive the seed of child stream `index` of `master`.

    Args:
        master (int): Master seed, any non-negative integer (reduced to 63 bits).
        index (int): Non-negative child index.

    Returns:
        int: 63-bit child seed.
    """
    if master < 0 or index < 0:
        raise ValueError(f"Seeds and indices must be non-negative, got {master=}, {index=}.")
    return _mix64((master & MASK_63) ^ _mix64(index)) & MASK_63


def stream(seed: int) -> PRNGKeyArray:
    return random.key(seed & MASK_63)


def child_stream(master: int, index: int) -> PRNGKeyArray:
    return stream(child_seed(master, index))


def os_seed() -> int:
    """Draw a fresh 63-bit seed from the operating system."""
    return int.from_bytes(os.urandom(8), "little") & MASK_63
