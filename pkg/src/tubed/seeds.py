"""Labeled seed derivation.

Every stage draws randomness from ``stage_rng(root, label)``.  The label is
hashed with SHA-256 and its first 8 bytes are mixed with the root seed by a
``numpy.random.SeedSequence``; the same (root, label) pair always yields the
same stream, and distinct labels yield independent streams.
"""

import hashlib

import numpy as np


def label_key(label: str) -> int:
    return int.from_bytes(hashlib.sha256(label.encode()).digest()[:8], "little")


def stage_seed(root: int, label: str) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(root), label_key(label)])


def stage_rng(root: int, label: str) -> np.random.Generator:
    return np.random.default_rng(stage_seed(root, label))
