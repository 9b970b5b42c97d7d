"""Deterministic, order-independent random streams.

Every random decision in the toolkit draws from a stream keyed by
``(global_seed, frame_or_epoch, subsystem_tag)``.  Streams are derived by
hashing the key parts, so frame N can be generated without generating
frames 0..N-1, in any order, and from any number of worker processes,
with bit-identical results.
"""

from __future__ import annotations

import hashlib

import numpy as np


def stream_seed(*parts: int | str) -> int:
    """64-bit seed derived from the key parts, stable across platforms."""
    data = ":".join(str(p) for p in parts).encode("utf-8")
    digest = hashlib.sha256(data).digest()
    return int.from_bytes(digest[:8], "little")


def stream_rng(*parts: int | str) -> np.random.Generator:
    """A fresh PCG64 generator for the stream named by ``parts``."""
    return np.random.default_rng(stream_seed(*parts))
