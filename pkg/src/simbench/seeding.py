"""Stable seed derivation for per-entity random streams.

Python's builtin ``hash`` is salted per process, so every derived stream
goes through sha256 instead. ``derive_rng(seed, user_id, item_id)`` is
identical across processes and platforms.
"""

import hashlib

import numpy as np


def stable_hash(*parts) -> int:
    """64-bit integer digest of the string forms of ``parts``."""
    h = hashlib.sha256()
    for part in parts:
        h.update(repr(part).encode("utf-8"))
        h.update(b"\x1f")
    return int.from_bytes(h.digest()[:8], "big")


def derive_seed(seed: int, *parts) -> int:
    return stable_hash(seed, *parts)


def derive_rng(seed: int, *parts) -> np.random.Generator:
    """Independent generator for the stream named by ``parts``."""
    return np.random.default_rng(derive_seed(seed, *parts))
