"""Seed derivation for independent, reproducible random streams.

Every stochastic component draws from a counter-based generator whose key
mixes the master seed, a purpose tag, and any entity indices (for example a
cascade number). Streams are therefore independent of each other and of
execution order: cascade 17 gets the same randomness whether it is simulated
first, last, or on another thread.
"""

import hashlib

import numpy as np


def _tag_to_int(tag: str) -> int:
    digest = hashlib.blake2s(tag.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big")


def derive_rng(master_seed: int, tag: str, *indices: int | str) -> np.random.Generator:
    """Return a Philox generator keyed by (master_seed, tag, *indices)."""
    entropy = [int(master_seed) & 0xFFFFFFFFFFFFFFFF, _tag_to_int(tag)]
    for idx in indices:
        if isinstance(idx, str):
            entropy.append(_tag_to_int(idx))
        else:
            entropy.append(int(idx) & 0xFFFFFFFFFFFFFFFF)
    seq = np.random.SeedSequence(entropy)
    return np.random.Generator(np.random.Philox(seq))
