"""Deterministic, splittable random streams backed by counter-based Philox.

Every source of randomness in the package flows through an :class:`RngStream`.
A stream is identified by a 64-bit ``(seed, stream_id)`` pair; replaying a
stream reproduces its draws bit for bit, and distinct pairs give statistically
independent sequences.  Substreams are derived by hashing path components
(strings or integers) into a fresh ``stream_id``, so e.g. every
(epoch, example) pair in a training run owns its own stream and results do not
depend on evaluation order.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1


def _splitmix64(x: int) -> int:
    """One splitmix64 scrambling step (public-domain constants)."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def _fold(part) -> int:
    if isinstance(part, str):
        v = 0
        for b in part.encode("utf-8"):
            v = (v * 131 + b) & _MASK64
        return v
    if isinstance(part, (int, np.integer)):
        return int(part) & _MASK64
    raise TypeError(f"substream parts must be str or int, got {type(part).__name__}")


def derive_stream_id(base: int, *parts) -> int:
    """Mix path components into a new 64-bit stream id."""
    h = _splitmix64(int(base) & _MASK64)
    for p in parts:
        h = _splitmix64(h ^ _fold(p))
    return h


class RngStream:
    """A reproducible random stream: ``(seed, stream_id)`` fully determine it.

    The underlying generator is Philox4x64, keyed by the pair, so streams are
    cheap to create and independent across distinct ids.  ``counter`` tracks
    how many values this wrapper has handed out (for reporting and replay
    checks); it is bookkeeping only and does not feed back into the state.
    """

    def __init__(self, seed: int, stream_id: int = 0):
        self.seed = int(seed) & _MASK64
        self.stream_id = int(stream_id) & _MASK64
        self.counter = 0
        key = np.array([self.seed, self.stream_id], dtype=np.uint64)
        self._gen = np.random.Generator(np.random.Philox(key=key))

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id}, counter={self.counter})"

    def substream(self, *parts) -> "RngStream":
        """Derive an independent stream from path components.

        The same ``(seed, stream_id, parts)`` always yields the same substream,
        regardless of how many draws this stream has made.
        """
        return RngStream(self.seed, derive_stream_id(self.stream_id, *parts))

    def clone(self) -> "RngStream":
        """A fresh stream at the start of this stream's sequence."""
        return RngStream(self.seed, self.stream_id)

    def normal(self, size=None) -> np.ndarray:
        out = self._gen.standard_normal(size if size is not None else ())
        self.counter += int(np.size(out))
        return out

    def uniform(self, low=0.0, high=1.0, size=None) -> np.ndarray:
        out = self._gen.uniform(low, high, size)
        self.counter += int(np.size(out))
        return out

    def integers(self, low, high=None, size=None) -> np.ndarray:
        out = self._gen.integers(low, high, size)
        self.counter += int(np.size(out))
        return out

    def rademacher(self, size) -> np.ndarray:
        """Uniform +-1 draws as float64."""
        out = self._gen.integers(0, 2, size).astype(np.float64) * 2.0 - 1.0
        self.counter += int(np.size(out))
        return out

    def permutation(self, n: int) -> np.ndarray:
        out = self._gen.permutation(n)
        self.counter += n
        return out


def sample_standard_normal(rng: RngStream, n: int) -> np.ndarray:
    """n i.i.d. standard-normal draws; deterministic given the stream."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    return rng.normal(n)
