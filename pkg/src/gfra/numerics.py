"""Seeded random streams and the handful of distributions the simulator draws from.

Every stochastic component takes a :class:`SeededRng`. Streams are keyed
Philox counters, so a ``(seed, stream_id)`` pair fixes the draw sequence on
any platform, and :meth:`SeededRng.split` hands out independent children
without touching the parent.
"""

from __future__ import annotations

import hashlib
import struct
from typing import Any

import numpy as np

__all__ = ["SeededRng", "split", "standard_normal", "complex_normal", "bernoulli"]

_MASK64 = (1 << 64) - 1


class SeededRng:
    """A reproducible random stream identified by ``(seed, stream_id)``."""

    def __init__(self, seed: int, stream_id: int = 0):
        if not (0 <= seed <= _MASK64 and 0 <= stream_id <= _MASK64):
            raise ValueError("seed and stream_id must be unsigned 64-bit integers")
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        key = np.array([self.seed, self.stream_id], dtype=np.uint64)
        self._gen = np.random.Generator(np.random.Philox(key=key))

    def __repr__(self) -> str:
        return f"SeededRng(seed={self.seed}, stream_id={self.stream_id:#x})"

    @property
    def generator(self) -> np.random.Generator:
        return self._gen

    def split(self, label: str) -> "SeededRng":
        """Child stream keyed on ``(seed, stream_id, label)``; the parent is not advanced."""
        if not label:
            raise ValueError("split label must be non-empty")
        digest = hashlib.blake2b(
            struct.pack("<QQ", self.seed, self.stream_id) + label.encode("utf-8"),
            digest_size=8,
        ).digest()
        return SeededRng(self.seed, struct.unpack("<Q", digest)[0])

    def get_state(self) -> dict[str, Any]:
        return {"seed": self.seed, "stream_id": self.stream_id,
                "bit_generator": self._gen.bit_generator.state}

    @classmethod
    def from_state(cls, state: dict[str, Any]) -> "SeededRng":
        rng = cls(state["seed"], state["stream_id"])
        rng._gen.bit_generator.state = state["bit_generator"]
        return rng

    # distributions

    def standard_normal(self, size=None):
        return self._gen.standard_normal(size)

    def normal(self, loc=0.0, scale=1.0, size=None):
        return self._gen.normal(loc, scale, size)

    def uniform(self, low=0.0, high=1.0, size=None):
        return self._gen.uniform(low, high, size)

    def complex_normal(self, variance: float = 1.0, size=None):
        """Circularly-symmetric CN(0, variance): real and imaginary parts each N(0, variance/2)."""
        if not variance > 0:
            raise ValueError(f"complex_normal variance must be positive, got {variance}")
        scale = np.sqrt(variance / 2.0)
        re = self._gen.standard_normal(size)
        im = self._gen.standard_normal(size)
        return scale * (re + 1j * im)

    def bernoulli(self, p: float, size=None):
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"bernoulli probability must lie in [0, 1], got {p}")
        u = self._gen.random(size)
        return (u < p).astype(np.uint8)

    def integers(self, low, high=None, size=None):
        return self._gen.integers(low, high, size)

    def choice(self, n: int, size: int, replace: bool = True):
        return self._gen.choice(n, size=size, replace=replace)

    def permutation(self, n: int):
        return self._gen.permutation(n)


# Function forms, for call sites that read better without a method.

def split(rng: SeededRng, label: str) -> SeededRng:
    return rng.split(label)


def standard_normal(rng: SeededRng, size=None):
    return rng.standard_normal(size)


def complex_normal(rng: SeededRng, variance: float, size=None):
    return rng.complex_normal(variance, size)


def bernoulli(rng: SeededRng, p: float, size=None):
    return rng.bernoulli(p, size)
