"""Deterministic random streams derived from one top-level seed.

Every random draw in the pipeline comes from a counter-based Philox
generator keyed by hashing (seed, label, label, ...), so any substream
can be reproduced in isolation and runs are bit-identical per seed.
"""

from __future__ import annotations

import hashlib

import numpy as np


def derive_key(seed: int, *labels: object) -> int:
    """Collapse (seed, labels...) into a 64-bit stream key."""
    h = hashlib.blake2b(digest_size=8)
    h.update(str(int(seed)).encode("ascii"))
    for label in labels:
        h.update(b"/")
        h.update(str(label).encode("utf-8"))
    return int.from_bytes(h.digest(), "little")


def substream(seed: int, *labels: object) -> np.random.Generator:
    """Independent generator for the named substream of `seed`."""
    return np.random.Generator(np.random.Philox(key=derive_key(seed, *labels)))
