"""Counter-based random streams.

Every stochastic routine in the package draws from a Philox counter-based
generator whose 128-bit key is derived from ``(seed, purpose, *context)``
by a splitmix64 chain.  Two access patterns are provided:

* :func:`stream` — an ordinary ``numpy.random.Generator`` for routines that
  consume a single stream sequentially (data sampling, forward simulation,
  Monte Carlo estimators).  Deterministic given the key material.

* :func:`row_normals` — standard-normal draws addressed by *row*, used for
  per-trajectory noise.  Row ``i`` always reads the same counter blocks of
  the same keyed stream, so any partition of ``[row_start, row_stop)`` into
  chunks (threads, processes, whatever) reproduces identical values.  One
  Philox counter block yields four 64-bit words; each row consumes a whole
  number of blocks, and normals come from the inverse CDF so that exactly
  one word feeds one value.

Purpose tags keep independent uses of the same user seed from colliding.
"""

from __future__ import annotations

import numpy as np
from numpy.random import Generator, Philox
from scipy.special import ndtri

PURPOSE_PRIOR = 1
PURPOSE_STEP = 2
PURPOSE_FORWARD = 3
PURPOSE_DATA = 4
PURPOSE_MC = 5

_MASK64 = (1 << 64) - 1


def _splitmix64(state: int) -> tuple[int, int]:
    """One splitmix64 update; returns (new_state, output word)."""
    state = (state + 0x9E3779B97F4A7C15) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return state, z ^ (z >> 31)


def philox_key(seed: int, *context: int) -> int:
    """Derive a 128-bit Philox key from a seed and integer context words."""
    state = int(seed) & _MASK64
    for word in context:
        state, _ = _splitmix64(state ^ (int(word) & _MASK64))
    state, lo = _splitmix64(state)
    _, hi = _splitmix64(state)
    return (hi << 64) | lo


def stream(seed: int, purpose: int, *context: int) -> Generator:
    """A sequential generator keyed by (seed, purpose, context)."""
    return Generator(Philox(key=philox_key(seed, purpose, *context)))


def _uniform_open(raw: np.ndarray) -> np.ndarray:
    # 53-bit mantissa, offset by half an ulp: strictly inside (0, 1).
    return ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53


def row_normals(
    seed: int,
    purpose: int,
    context: int,
    row_start: int,
    row_stop: int,
    width: int,
) -> np.ndarray:
    """Standard normals for rows [row_start, row_stop), shape (rows, width).

    The value at (row, column) depends only on the key material and the
    absolute row index, never on how rows are batched.
    """
    rows = int(row_stop) - int(row_start)
    if rows < 0 or width < 1:
        raise ValueError("need row_stop >= row_start and width >= 1")
    if rows == 0:
        return np.empty((0, width))
    blocks_per_row = -(-width // 4)  # ceil; one block = 4 uint64 words
    bg = Philox(
        key=philox_key(seed, purpose, context),
        counter=int(row_start) * blocks_per_row,
    )
    raw = bg.random_raw(rows * blocks_per_row * 4)
    words = np.asarray(raw, dtype=np.uint64).reshape(rows, blocks_per_row * 4)
    return ndtri(_uniform_open(words[:, :width]))
