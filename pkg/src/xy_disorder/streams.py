"""Counter-based random substreams.

Realization ``k`` of an ensemble always draws from the substream
``(master_seed, k)``, so results never depend on how realizations are
scheduled across workers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

#: Substream purposes. Pilot draws for the tilted annealed proposal must not
#: reuse the main realization streams.
MAIN = 0
PILOT = 1


@dataclass(frozen=True)
class RandomStream:
    master_seed: int
    substream_index: int
    purpose: int = MAIN

    def __post_init__(self):
        if self.substream_index < 0:
            raise ValueError("substream_index must be >= 0")
        if not 0 <= self.master_seed < 2**64:
            raise ValueError("master_seed must be a 64-bit unsigned integer")

    def generator(self) -> np.random.Generator:
        # SeedSequence hashes (seed, spawn_key) with a platform-independent
        # mixing function; Philox is a counter-based bit generator.
        seq = np.random.SeedSequence(
            self.master_seed, spawn_key=(self.purpose, self.substream_index)
        )
        return np.random.Generator(np.random.Philox(seq))


def derive_substream(master_seed: int, k: int, purpose: int = MAIN) -> RandomStream:
    """Return the reproducible stream for realization ``k``."""
    if k < 0:
        raise ValueError(f"substream index must be >= 0, got {k}")
    return RandomStream(int(master_seed), int(k), int(purpose))
