"""Seeded random streams, one per simulation concern.

Each concern (arrivals, movement, tie-breaks, dwell, ...) draws from its own
generator derived from the master seed plus a stream tag, so e.g. changing
the dispatch strategy never perturbs the arrival randomness. Same seed and
tag always reproduce the same draw sequence.
"""
from __future__ import annotations

import numpy as np


def stream_from(seed: int, tag: str) -> np.random.Generator:
    """Derive an independent generator from (seed, tag)."""
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF] + list(tag.encode("utf-8"))
    return np.random.default_rng(np.random.SeedSequence(entropy))


def derive_seed(seed: int, *path: int) -> int:
    """Derive a child 64-bit seed (e.g. per-run seeds from a master seed)."""
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, *[int(p) for p in path]])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


class RngStreams:
    """Lazy bundle of per-concern generators for one run."""

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._streams: dict[str, np.random.Generator] = {}

    def stream(self, tag: str) -> np.random.Generator:
        gen = self._streams.get(tag)
        if gen is None:
            gen = stream_from(self.seed, tag)
            self._streams[tag] = gen
        return gen
