"""Reproducible counter-based random number streams."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["RngStream", "as_generator"]

_U64 = 2**64


@dataclass(frozen=True)
class RngStream:
    """Identifier of an independent Philox stream.

    Identical (seed, stream_id) pairs reproduce the identical uniform-variate
    sequence on every platform; distinct stream_ids yield statistically
    independent streams. Batch jobs assign one stream per job so that results
    never depend on worker scheduling.
    """

    seed: int
    stream_id: int = 0

    def __post_init__(self):
        for name in ("seed", "stream_id"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or not (0 <= int(v) < _U64):
                raise ValueError(f"{name} must be an integer in [0, 2^64), got {v!r}")

    def generator(self) -> np.random.Generator:
        key = np.array([self.seed, self.stream_id], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))

    def child(self, offset: int) -> "RngStream":
        """Derived stream; callers must keep offsets disjoint themselves."""
        return RngStream(self.seed, (self.stream_id + offset) % _U64)


def as_generator(rng) -> np.random.Generator:
    """Accept an RngStream, Generator, or integer seed; return a Generator."""
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, (int, np.integer)):
        return RngStream(int(rng)).generator()
    raise TypeError(f"cannot interpret {type(rng).__name__} as a random generator")
