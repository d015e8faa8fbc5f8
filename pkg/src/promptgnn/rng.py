"""Seed derivation: one master seed fans out into named, independent streams.

Every random decision in the package flows through a stream derived here, so
a run is reproducible from the single master seed and individual components
(triplet sampling, task sampling, weight init, augmentation) can be reseeded
without disturbing each other.
"""

from __future__ import annotations

import hashlib

import numpy as np

# Canonical stream names used across the package.
STREAM_TRIPLETS = "triplets"
STREAM_TASKS = "tasks"
STREAM_INIT = "init"
STREAM_AUGMENT = "augment"


def substream_seed(master_seed: int, stream: str) -> int:
    """Derive a 64-bit seed for a named stream from the master seed.

    Uses SHA-256 over ``"{master}:{stream}"`` so the mapping is stable across
    platforms and Python versions (unlike ``hash()``).
    """
    digest = hashlib.sha256(f"{master_seed}:{stream}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def substream(master_seed: int, stream: str) -> np.random.Generator:
    """A fresh PCG64 generator for the named stream."""
    return np.random.Generator(np.random.PCG64(substream_seed(master_seed, stream)))
