"""Deterministic, replicate-keyed random streams.

Every stochastic routine draws from a counter-based generator keyed by
``(seed, replicate index, module tag)``.  Replicates are therefore independent
of execution order and of how work is split across worker processes: replicate
k produces the same numbers whether it runs first, last, or in another process.
"""

from __future__ import annotations

import zlib

import numpy as np

__all__ = ["substream", "kernel_seed", "spawn_seeds"]


def _tag_id(tag: str) -> int:
    return zlib.crc32(tag.encode("utf-8"))


def substream(seed: int, replicate: int = 0, tag: str = "main") -> np.random.Generator:
    """Return the Generator for one (seed, replicate, tag) cell.

    Philox is counter-based, so streams for different keys never overlap and
    can be created in any order.
    """
    ss = np.random.SeedSequence((int(seed), int(replicate), _tag_id(tag)))
    return np.random.Generator(np.random.Philox(ss))


def kernel_seed(seed: int, replicate: int = 0, tag: str = "kernel") -> int:
    """A 31-bit seed for the compiled kernels' internal generator."""
    ss = np.random.SeedSequence((int(seed), int(replicate), _tag_id(tag)))
    return int(ss.generate_state(1, dtype=np.uint32)[0] & 0x7FFFFFFF)


def spawn_seeds(seed: int, replicates: int, tag: str,
                start: int = 0) -> np.ndarray:
    """Kernel seeds for replicates ``start .. start+replicates-1`` (int64)."""
    out = np.empty(replicates, dtype=np.int64)
    for i in range(replicates):
        out[i] = kernel_seed(seed, start + i, tag)
    return out
