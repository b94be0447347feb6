"""Named, independently seeded random streams.

Every stochastic process in the simulator draws from its own stream so that
runs with different algorithms see identical channel, mobility and shadowing
realizations for the same seed (common random numbers).
"""

from __future__ import annotations

import zlib

import numpy as np

STREAMS = (
    "channel",
    "shadowing",
    "mobility",
    "agent-init",
    "exploration",
    "replay",
)


def _stream_key(name: str) -> int:
    return zlib.crc32(name.encode("utf-8"))


def stream(seed: int, name: str, *sub: int) -> np.random.Generator:
    """Return a generator for stream `name` under the master `seed`.

    `sub` lets callers split a stream further (e.g. one exploration stream per
    slice) without touching the others.
    """
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(_stream_key(name), *sub))
    return np.random.Generator(np.random.PCG64(ss))


class StreamSet:
    """Lazily created named streams sharing one master seed."""

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._gens: dict[tuple, np.random.Generator] = {}

    def get(self, name: str, *sub: int) -> np.random.Generator:
        key = (name, *sub)
        if key not in self._gens:
            self._gens[key] = stream(self.seed, name, *sub)
        return self._gens[key]
