"""Deterministic seed derivation.

Every stochastic component draws from a numpy Generator whose seed is derived
from the experiment seed plus a stable component key, so outputs never depend
on call order, worker count, or Python hash randomization.
"""

import hashlib

import numpy as np


def derive_seed(seed: int, *parts) -> int:
    """Stable 64-bit seed from a base seed and arbitrary str/int key parts."""
    h = hashlib.blake2b(digest_size=8)
    h.update(str(int(seed)).encode())
    for part in parts:
        h.update(b"\x1f")
        h.update(str(part).encode())
    return int.from_bytes(h.digest(), "big")


def make_rng(seed: int, *parts) -> np.random.Generator:
    """Generator for component `parts` under experiment `seed`."""
    return np.random.default_rng(derive_seed(seed, *parts))
