"""Counter-split random streams.

Shots are grouped into fixed blocks; block ``b`` of stream ``key`` under a
master seed always draws from ``SeedSequence([seed, *key, b])``. Results are
therefore independent of thread count and of evaluation order.
"""

from __future__ import annotations

from typing import Iterator

import numpy as np

BLOCK = 65536


def stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, key)]))


def derive_seed(rng: np.random.Generator | int | None) -> int:
    """Turn a generator (or seed) into a master seed for counter splitting."""
    if isinstance(rng, (int, np.integer)):
        return int(rng)
    rng = np.random.default_rng(rng)
    return int(rng.integers(0, 2**63))


def blocks(shots: int, block: int = BLOCK) -> Iterator[tuple[int, int, int]]:
    """Yield ``(index, start, size)`` covering ``shots``."""
    for b, start in enumerate(range(0, shots, block)):
        yield b, start, min(block, shots - start)


def block_streams(seed: int, key: tuple[int, ...], shots: int) -> Iterator[tuple[int, int, np.random.Generator]]:
    """Yield ``(start, size, generator)`` for each block of a keyed stream."""
    for b, start, size in blocks(shots):
        yield start, size, stream(seed, *key, b)
