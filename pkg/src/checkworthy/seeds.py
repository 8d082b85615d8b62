"""Hierarchical seed derivation.

All randomness in the pipeline flows from a single master seed. Components
derive their own seeds from (master, purpose-tag, indices...) so that runs
are reproducible and independent tasks (folds, repetitions, sweep resamples)
never share a generator.
"""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(master: int, *tags: object) -> int:
    """Derive a child seed from a master seed and a tag path.

    Tags may be strings, ints, or floats; the derivation is stable across
    runs and platforms.
    """
    payload = repr((int(master),) + tuple(tags)).encode("utf-8")
    digest = hashlib.blake2b(payload, digest_size=8).digest()
    return int.from_bytes(digest, "big") % (2**63)


def rng_for(master: int, *tags: object) -> np.random.Generator:
    """A fresh generator seeded from the derived seed for the tag path."""
    return np.random.default_rng(derive_seed(master, *tags))
