"""Counter-based random streams addressed by (seed, path).

Philox is counter-based, so a stream is fully determined by the seed and an
integer path such as (experiment, replica, step). Streams for different paths
are independent, and results do not depend on which thread draws them, which
is what makes replicated experiments bit-reproducible at any worker count.
"""

from __future__ import annotations

from numpy.random import Generator, Philox, SeedSequence

__all__ = ["stream"]


def stream(seed: int, *path: int) -> Generator:
    """Independent generator for the given integer path under ``seed``."""
    ss = SeedSequence(int(seed), spawn_key=tuple(int(p) for p in path))
    return Generator(Philox(ss))
