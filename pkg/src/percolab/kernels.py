"""Riesz-type kernels on the lattice and exact truncated kernel sums.

The regularized kernel is a power of the Japanese bracket
``<x> = sqrt(1 + |x|^2)``.  Exact sums of kernel products over a box exploit
that pins usually occupy few coordinates: with ``A`` the coordinates touched
by any pin, the summand depends on the orthogonal block only through its
squared norm, so the sum collapses to (points of the A-block) x (squared-norm
shell counts of the orthogonal block).  That reduction is what makes exact
truncated sums feasible in high dimension.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

_CHUNK_ROWS = 256


def bracket(x: np.ndarray) -> np.ndarray:
    """Japanese bracket of lattice vectors, along the last axis."""
    arr = np.asarray(x, dtype=np.float64)
    return np.sqrt(1.0 + np.sum(arr * arr, axis=-1))


def riesz(x: Sequence[float] | np.ndarray, exponent: float) -> float | np.ndarray:
    """Regularized Riesz kernel ``<x>**exponent``."""
    value = bracket(np.asarray(x)) ** exponent
    return float(value) if np.ndim(value) == 0 else value


def bracket_pow_sq(q: np.ndarray, exponent: float) -> np.ndarray:
    """``q**(exponent/2)`` for arrays of squared brackets ``q = 1 + r**2``.

    Fast paths cover the integer and half-integer exponents that all default
    kernels produce; anything else falls back to ``np.power``.
    """
    half = exponent / 2.0
    if half == round(half):
        return q ** int(round(half))
    lower = math.floor(half)
    if half - lower == 0.5:
        return q ** int(lower) * np.sqrt(q)
    return np.power(q, half)


def surface_area(d: int) -> float:
    """Surface area of the unit sphere in R^d."""
    return 2.0 * math.pi ** (d / 2.0) / math.gamma(d / 2.0)


def linf_shell_count(d: int, r: np.ndarray | int) -> np.ndarray | int:
    """Number of lattice points on the sup-norm shell of radius r."""
    r_arr = np.asarray(r, dtype=np.int64)
    counts = np.where(r_arr == 0, 1, (2 * r_arr + 1) ** d - np.abs(2 * r_arr - 1) ** d)
    return int(counts) if np.ndim(r) == 0 else counts


def squared_norm_counts(m: int, L: int) -> np.ndarray:
    """``counts[s]`` = number of points of ``[-L, L]^m`` with squared norm s.

    Computed by m-fold convolution of the single-coordinate square histogram;
    all counts stay well below 2**53 for desk-scale m and L, so float64 is
    exact.
    """
    if m == 0:
        return np.ones(1)
    single = np.zeros(L * L + 1)
    single[0] = 1.0
    for v in range(1, L + 1):
        single[v * v] = 2.0
    counts = single
    for _ in range(m - 1):
        counts = np.convolve(counts, single)
    return counts


def active_axes(pins: Sequence[np.ndarray]) -> list[int]:
    """Coordinates where at least one pin is nonzero."""
    if not pins:
        return []
    stack = np.stack([np.asarray(p, dtype=np.int64) for p in pins])
    return [int(a) for a in np.flatnonzero(np.any(stack != 0, axis=0))]


def kernel_sum_work(d: int, L: int, pins: Sequence[np.ndarray]) -> float:
    """Summand-evaluation count of ``kernel_product_sum`` for these inputs."""
    axes = active_axes(pins)
    n_active = (2 * L + 1) ** len(axes)
    n_shells = (d - len(axes)) * L * L + 1
    return float(n_active) * float(n_shells) * max(len(pins), 1)


def kernel_product_sum(
    d: int,
    L: int,
    pins: Sequence[tuple[np.ndarray, float]],
) -> float:
    """Exact ``sum over z in [-L, L]^d of prod_j <z - p_j>**e_j``.

    ``pins`` is a list of (position, bracket exponent) pairs.  Accumulation is
    compensated (fsum over fixed-size chunk totals), so results are
    bit-reproducible for fixed inputs.
    """
    if d < 1 or L < 0:
        raise ValueError("need d >= 1 and L >= 0")
    positions = [np.asarray(p, dtype=np.int64) for p, _ in pins]
    exponents = [float(e) for _, e in pins]
    for p in positions:
        if p.shape != (d,):
            raise ValueError("pin dimension mismatch")
    if not pins:
        return float((2 * L + 1) ** d)

    axes = active_axes(positions)
    m = d - len(axes)
    shells = squared_norm_counts(m, L)
    shell_values = np.arange(shells.size, dtype=np.float64)
    nonzero = shells > 0
    shells = shells[nonzero]
    shell_values = shell_values[nonzero]

    if axes:
        grids = np.meshgrid(
            *[np.arange(-L, L + 1, dtype=np.int64) for _ in axes], indexing="ij"
        )
        active_points = np.stack([g.ravel() for g in grids], axis=1)
    else:
        active_points = np.zeros((1, 0), dtype=np.int64)

    partials = []
    for pos, _ in zip(positions, exponents):
        delta = active_points - pos[axes]
        partials.append(1.0 + np.sum(delta * delta, axis=1, dtype=np.int64))

    chunk_totals: list[float] = []
    n_rows = active_points.shape[0]
    for start in range(0, n_rows, _CHUNK_ROWS):
        stop = min(start + _CHUNK_ROWS, n_rows)
        block = np.ones((stop - start, shell_values.size))
        for partial, exponent in zip(partials, exponents):
            q = partial[start:stop, None] + shell_values[None, :]
            block *= bracket_pow_sq(q, exponent)
        chunk_totals.append(float(np.sum(block * shells[None, :])))
    return math.fsum(chunk_totals)
