"""Seed derivation for reproducible randomness.

Every random operation in this package draws from numpy's PCG64 generator.
Substreams are derived from a master seed plus a sequence of labels, so
independent pipeline stages (and independent per-item streams inside a
stage) never share or race on generator state:

    rng = derive_rng(master_seed, "trainset")
    rng = derive_rng(master_seed, "eval-pair", pair_id)

String labels are hashed to 64-bit integers with BLAKE2b; the resulting
integer tuple seeds a ``numpy.random.SeedSequence``. The scheme is stable
across runs, platforms, and Python versions.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _label_to_int(label: int | str) -> int:
    if isinstance(label, bool):
        raise TypeError("bool labels are ambiguous; use int or str")
    if isinstance(label, int):
        if label < 0:
            raise ValueError(f"seed labels must be non-negative, got {label}")
        return label
    digest = hashlib.blake2b(label.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def derive_rng(master_seed: int, *labels: int | str) -> np.random.Generator:
    """Return a PCG64 generator for the substream named by ``labels``."""
    if master_seed < 0:
        raise ValueError(f"master seed must be non-negative, got {master_seed}")
    entropy = [master_seed] + [_label_to_int(l) for l in labels]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


def derive_seed(master_seed: int, *labels: int | str) -> int:
    """Return a 64-bit integer seed for the substream named by ``labels``.

    For APIs that take a scalar seed rather than a generator handle.
    """
    if master_seed < 0:
        raise ValueError(f"master seed must be non-negative, got {master_seed}")
    entropy = [master_seed] + [_label_to_int(l) for l in labels]
    state = np.random.SeedSequence(entropy).generate_state(1, dtype=np.uint64)
    return int(state[0])
