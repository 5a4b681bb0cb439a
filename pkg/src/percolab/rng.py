"""Deterministic random streams.

All randomness in the package flows through counter-based Philox generators
keyed by ``(seed, stream index)``.  Opening stream ``i`` never requires
generating streams ``0..i-1`` first, so a job split across workers by stream
index reproduces exactly the draws a single worker would have made, in any
execution order.
"""

from __future__ import annotations

import hashlib

import numpy as np

_U64 = 2**64


def _fold_indices(indices: tuple[int, ...]) -> int:
    """Collapse a tuple of stream coordinates into one 64-bit index."""
    if len(indices) == 1:
        value = indices[0]
        if not 0 <= value < _U64:
            raise ValueError("stream index must fit in 64 bits")
        return value
    digest = hashlib.blake2b(
        ",".join(str(int(i)) for i in indices).encode(), digest_size=8
    ).digest()
    return int.from_bytes(digest, "little")


def stream(seed: int, *indices: int) -> np.random.Generator:
    """Open one named random stream of a master seed.

    A single index is used verbatim as the second Philox key word; multiple
    coordinates (for example ``(trial, copy)``) are folded through blake2b
    into one 64-bit word.  Both forms are stable across runs and platforms.
    """
    if not 0 <= seed < _U64:
        raise ValueError("seed must fit in 64 bits")
    index = _fold_indices(indices) if indices else 0
    key = np.array([seed, index], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def seeded_unit(seed: int, payload: bytes) -> float:
    """Deterministic pseudo-random float in [0, 1) for a byte payload.

    Used for reproducible "arbitrary bounded functions" in the exact-identity
    checks: the value depends only on ``(seed, payload)``, never on process
    state or Python's hash randomization.
    """
    digest = hashlib.blake2b(payload, digest_size=8, key=seed.to_bytes(8, "little"))
    return int.from_bytes(digest.digest(), "little") / _U64
