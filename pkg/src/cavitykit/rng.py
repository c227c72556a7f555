"""Seeded random streams.

Every stochastic routine takes an explicit integer seed.  Independent
sub-streams are derived as ``Philox(SeedSequence([seed, tag, *index]))``
where ``tag`` is a stable 32-bit hash of a purpose string, so two routines
sharing a seed never share a stream and results do not depend on the order
in which streams are requested.
"""

from __future__ import annotations

import zlib

import numpy as np

MASK64 = (1 << 64) - 1


def tag_hash(tag: str) -> int:
    return zlib.crc32(tag.encode("utf-8"))


def stream(seed: int, tag: str, *index: int) -> np.random.Generator:
    """Return the generator for ``(seed, tag, index...)``."""
    words = [int(seed) & MASK64, tag_hash(tag), *(int(i) & MASK64 for i in index)]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(words)))


def child_seed(seed: int, tag: str, *index: int) -> int:
    """Derive a 64-bit integer seed, for handing to another seeded routine."""
    return int(stream(seed, tag, *index).integers(0, 1 << 63))
