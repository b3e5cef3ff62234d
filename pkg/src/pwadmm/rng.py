"""Named, independent random streams derived from one master seed.

Every consumer (graph generation, data synthesis, per-walk routing, ...)
draws from its own stream, so changing e.g. the number of walks never
perturbs the synthesized instance.
"""

from __future__ import annotations

import zlib

import numpy as np


def _tag(name: str) -> int:
    # crc32 is stable across processes, unlike hash()
    return zlib.crc32(name.encode("utf-8")) & 0xFFFFFFFF


def stream(seed: int, name: str, *index: int) -> np.random.Generator:
    """Return the generator for stream ``name`` (optionally indexed, e.g. per walk)."""
    if seed < 0:
        raise ValueError(f"seed must be nonnegative, got {seed}")
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(_tag(name), *map(int, index)))
    return np.random.Generator(np.random.PCG64(ss))


def as_generator(seed: int | np.random.Generator, name: str) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return stream(int(seed), name)


class Streams:
    """Stream factory bound to a master seed."""

    def __init__(self, seed: int):
        self.seed = int(seed)

    def graph(self) -> np.random.Generator:
        return stream(self.seed, "graph")

    def data(self) -> np.random.Generator:
        return stream(self.seed, "data")

    def placement(self) -> np.random.Generator:
        return stream(self.seed, "placement")

    def routing(self, walk: int) -> np.random.Generator:
        return stream(self.seed, "routing", walk)

    def delays(self, walk: int) -> np.random.Generator:
        return stream(self.seed, "delays", walk)

    def sync_delays(self) -> np.random.Generator:
        return stream(self.seed, "sync_delays")
