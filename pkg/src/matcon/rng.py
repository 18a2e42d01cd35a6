"""Counter-keyed random substreams.

Every random draw in the toolkit comes from a :class:`RngStream` identified by
``(master_seed, key...)``. The generator behind a key depends on nothing but
the key, so results are identical however the work is scheduled.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Replicates are sampled in fixed-size blocks; each (block, entry) pair owns a
# substream. Changing this constant changes every Monte Carlo result.
BLOCK_SIZE = 2048


@dataclass(frozen=True)
class RngStream:
    seed: int
    key: tuple[int, ...] = ()

    def child(self, *key: int) -> "RngStream":
        return RngStream(self.seed, self.key + tuple(int(k) for k in key))

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=self.key)
        return np.random.Generator(np.random.Philox(ss))


# stream tags keep unrelated consumers of one master seed apart
TAG_COUNTING = 1
TAG_BROWNIAN = 2
TAG_JUMP_BATCH = 3
TAG_BROWNIAN_BATCH = 4
TAG_LEMMAS = 5


def blocks(replicates: int, block_size: int = BLOCK_SIZE) -> list[tuple[int, int]]:
    """``(block_index, size)`` pairs covering ``replicates``."""
    out = []
    for b, start in enumerate(range(0, replicates, block_size)):
        out.append((b, min(block_size, replicates - start)))
    return out
