"""Seeding scheme.

Every random stream is a numpy ``PCG64`` generator built from a
``SeedSequence`` whose entropy is derived from a stable BLAKE2b digest of the
stream's coordinates, e.g. ``("data", base_seed, K, rep, domain)``. The digest
does not depend on Python's hash randomisation or platform, so a stream is
reproducible everywhere numpy's PCG64 is.
"""

from __future__ import annotations

import hashlib

import numpy as np


def stable_seed(*parts) -> int:
    """Derive a 64-bit integer from an ordered tuple of str/int parts."""
    text = "\x1f".join(str(p) for p in parts)
    digest = hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def make_rng(*parts) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(stable_seed(*parts))))


def as_rng(seed_or_rng) -> np.random.Generator:
    if isinstance(seed_or_rng, np.random.Generator):
        return seed_or_rng
    return np.random.Generator(np.random.PCG64(seed_or_rng))
