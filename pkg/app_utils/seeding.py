import hashlib

import numpy as np


def consumer_key(consumer: str) -> int:
    """Stable 64-bit key for a named random-number consumer"""
    digest = hashlib.sha256(consumer.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def derive_rng(seed: int, consumer: str) -> np.random.Generator:
    """Counter-based generator for one consumer of the run seed.

    Philox streams are keyed by (seed, consumer) so every consumer draws from
    an independent stream regardless of the order in which consumers run.
    """
    if seed < 0:
        raise ValueError(f"Seed must be non-negative, got {seed}")
    key = ((seed & 0xFFFFFFFFFFFFFFFF) << 64) | consumer_key(consumer)
    return np.random.Generator(np.random.Philox(key=key))
