"""Counter-based random streams keyed by (master seed, stream index).

Every trajectory or chain draws from its own Philox stream, so results do not
depend on how work is split across processes.
"""

from __future__ import annotations

import math

import numpy as np


def stream(master_seed: int, *key: int) -> np.random.Generator:
    """Philox generator for stream ``key`` (one or more nonnegative ints) under ``master_seed``."""
    seq = np.random.SeedSequence(entropy=int(master_seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(seq))


class UniformStream:
    """Buffered uniforms on [0, 1) with scalar access; cheaper than per-call Generator draws."""

    __slots__ = ("gen", "block", "_buf", "_pos")

    def __init__(self, gen: np.random.Generator, block: int = 1024):
        self.gen = gen
        self.block = block
        self._buf: list[float] = []
        self._pos = 0

    def random(self) -> float:
        if self._pos == len(self._buf):
            self._buf = self.gen.random(self.block).tolist()
            self._pos = 0
        u = self._buf[self._pos]
        self._pos += 1
        return u

    def exponential(self, rate: float) -> float:
        """Inverse-CDF exponential draw."""
        return -math.log1p(-self.random()) / rate
