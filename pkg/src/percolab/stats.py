"""Small shared statistics containers for Monte Carlo estimates."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable


@dataclass(frozen=True)
class MCEstimate:
    """Sample mean with its standard error."""

    mean: float
    stderr: float
    samples: int
    seed: int | None = None

    def compatible(self, other: "MCEstimate | float", n_sigma: float = 4.0,
                   extra: float = 0.0) -> bool:
        """Two-estimate (or estimate-vs-constant) agreement test."""
        if isinstance(other, MCEstimate):
            gap = abs(self.mean - other.mean)
            spread = math.hypot(self.stderr, other.stderr)
        else:
            gap = abs(self.mean - float(other))
            spread = self.stderr
        return gap <= n_sigma * spread + extra


@dataclass(frozen=True)
class Moments:
    """Associative (sum, sum of squares, count) accumulator chunk."""

    total: float
    total_sq: float
    count: int


def merge_moments(chunks: Iterable[Moments], seed: int | None = None) -> MCEstimate:
    """Merge per-stream moment chunks into one estimate.

    The merge is a compensated sum over chunks in the given order, so a fixed
    chunk layout yields bit-identical results for any worker partition.
    """
    ordered = list(chunks)
    n = sum(c.count for c in ordered)
    if n == 0:
        raise ValueError("no samples to merge")
    total = math.fsum(c.total for c in ordered)
    total_sq = math.fsum(c.total_sq for c in ordered)
    mean = total / n
    if n > 1:
        variance = max(total_sq / n - mean * mean, 0.0) * n / (n - 1)
        stderr = math.sqrt(variance / n)
    else:
        stderr = float("inf")
    return MCEstimate(mean=mean, stderr=stderr, samples=n, seed=seed)
