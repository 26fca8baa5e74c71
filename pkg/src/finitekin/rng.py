"""Counter-based random streams.

Every stochastic stage derives its own Philox generator from the run seed
plus a label path, so results do not depend on execution order or worker
count, and any stage can be replayed in isolation.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _label_word(label) -> int:
    """Map a stream label to a stable 64-bit word (no PYTHONHASHSEED wobble)."""
    if isinstance(label, (int, np.integer)):
        return int(label) & 0xFFFFFFFFFFFFFFFF
    digest = hashlib.sha256(str(label).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def stream(seed: int, *path) -> np.random.Generator:
    """Independent generator for the (seed, *path) substream.

    Distinct paths give statistically independent Philox streams; the same
    path always reproduces the same stream.
    """
    words = [_label_word(p) for p in path]
    ss = np.random.SeedSequence(entropy=int(seed) & ((1 << 64) - 1), spawn_key=tuple(words))
    return np.random.Generator(np.random.Philox(ss))


def substream_uniforms(seed: int, n: int, *path) -> np.ndarray:
    """Pre-drawn uniforms for kernels that cannot hold a Generator (numba)."""
    return stream(seed, *path).random(n)
