"""Counter-based random substreams.

Every path owns a Philox generator keyed by ``(master_seed, path_id, stream)``,
so results do not depend on how paths are distributed over workers.
"""
from __future__ import annotations

from functools import cached_property

import numpy as np

EVENTS = 0
MARKS = 1
BROWNIAN = 2
INNER = 3


def substream(master_seed: int, *key: int) -> np.random.Generator:
    seq = np.random.SeedSequence(int(master_seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(seq))


class PathStreams:
    """Lazily created, mutually disjoint generators for one path."""

    def __init__(self, master_seed: int, path_id: int, prefix: tuple = ()):
        self.master_seed = int(master_seed)
        self.path_id = int(path_id)
        self.prefix = tuple(prefix)

    def _key(self, stream):
        return (*self.prefix, self.path_id, stream)

    @cached_property
    def events(self) -> np.random.Generator:
        return substream(self.master_seed, *self._key(EVENTS))

    @cached_property
    def marks(self) -> np.random.Generator:
        return substream(self.master_seed, *self._key(MARKS))

    @cached_property
    def brownian(self) -> np.random.Generator:
        return substream(self.master_seed, *self._key(BROWNIAN))

    def inner(self, checkpoint: int) -> np.random.Generator:
        """Generator for a batch of nested continuation paths."""
        return substream(self.master_seed, *self._key(INNER), int(checkpoint))
