"""Seeded random streams.

Every stream is a Philox4x64 counter-based generator keyed by
``SeedSequence([seed, *path])``.  Per-game uniforms are laid out as rows of a
fixed width, so the row for game ``i`` is found by advancing the counter and
never depends on which worker draws it or in what order.
"""

from __future__ import annotations

import numpy as np

# stream tags
INPUTS = 1
NOISE = 2
MEASURE = 3
VERIFIER = 4
PROBE = 5
SEARCH = 6
CIRCUIT = 7
TAPE = 8


def _key(seed: int, path: tuple[int, ...]) -> np.ndarray:
    if seed < 0:
        raise ValueError("seed must be non-negative")
    return np.random.SeedSequence([int(seed), *map(int, path)]).generate_state(2, np.uint64)


def generator(seed: int, *path: int) -> np.random.Generator:
    """Return an independent generator for ``(seed, *path)``."""
    return np.random.Generator(np.random.Philox(key=_key(seed, path)))


def uniform_rows(seed: int, path: tuple[int, ...], lo: int, hi: int, width: int) -> np.ndarray:
    """Rows ``lo..hi-1`` of the uniform table for ``(seed, *path)``.

    ``width`` must be a multiple of 4 (one Philox block yields four doubles).
    """
    if width % 4:
        raise ValueError("row width must be a multiple of 4")
    bit_gen = np.random.Philox(key=_key(seed, path))
    if lo:
        bit_gen.advance(lo * width // 4)
    return np.random.Generator(bit_gen).random((hi - lo, width))


def derive_seed(seed: int, *path: int) -> int:
    """A 63-bit child seed, for handing a stream to a sub-experiment."""
    state = np.random.SeedSequence([int(seed), *map(int, path)]).generate_state(1, np.uint64)
    return int(state[0] >> np.uint64(1))
