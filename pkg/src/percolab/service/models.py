"""Request and response schemas for the percolab service.

Requests carry fully resolved values (point lists, edge-list text), never
file paths: the CLI resolves files before posting, which is what makes a
stored manifest replayable without its original inputs.
"""

from __future__ import annotations

from typing import Any, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field


class _Request(BaseModel):
    model_config = ConfigDict(extra="forbid")


class SampleRequest(_Request):
    """One percolation configuration, optionally conditioned and treed."""

    dim: Optional[int] = None
    radius: Optional[int] = None
    edges: Optional[str] = Field(
        default=None, description="edge-list text, one 'u v' tuple pair per line"
    )
    p: float = 0.5
    seed: int = 0
    marked: Optional[list[list[int]]] = None
    emit_trees: bool = False


class TreesRequest(_Request):
    k: int
    emit: Literal["json", "newick"] = "json"


class ValRequest(_Request):
    """Diagram family valuation across a separation sweep."""

    family: Literal["single-edge", "star", "cycle"]
    n: list[int]
    d: int = 7
    legs: int = 3
    L: Optional[int] = None
    method: Literal["auto", "exact-sum", "importance-mc"] = "auto"
    samples: int = 400_000
    seed: int = 0
    workers: int = 1
    expect_slope: Optional[float] = None
    slope_tol: float = 0.5


class ConvCheckRequest(_Request):
    """Truncated convolution ratios over a pair (or triple) battery.

    When ``pairs`` is absent the battery is generated from the seed with
    both points confined to the first two coordinate axes, which keeps the
    exact kernel sums affordable in d up to 7.
    """

    d: int = 5
    a: float = 2.0
    b: float = 2.0
    variant: Literal["std", "log", "triple"] = "std"
    pairs: Optional[list[list[list[int]]]] = None
    n_pairs: int = 30
    scale: int = 8
    seed: int = 0
    L: Optional[int] = None
    spread_tol: float = 3.0


class OneLoopRequest(_Request):
    d: int = 7
    n: list[int]
    sep_mult: int = 3
    L_mult: int = 2
    samples: int = 1_500_000
    seed: int = 0
    workers: int = 1
    expect_slope: Optional[float] = None
    slope_tol: float = 0.5


class FitRequest(_Request):
    pairs: list[list[float]]


class IntegralRequest(_Request):
    tree: str = Field(description="leaf-labeled shape in newick text")
    points: list[list[float]]
    d: int = 7
    samples: int = 400_000
    seed: int = 0
    workers: int = 1
    r_mix: Optional[float] = None


class PredictRequest(_Request):
    k: int
    y: list[list[float]]
    inputs: dict[str, Any]
    samples: int = 400_000
    seed: int = 0
    workers: int = 1


class TauRequest(_Request):
    points: list[list[int]]
    p: float
    trials: int
    seed: int = 0
    dim: Optional[int] = None
    radius: Optional[int] = None
    edges: Optional[str] = None
    workers: int = 1


class RhoRequest(_Request):
    p: float
    R: int
    M: int
    trials: int
    seed: int = 0
    dim: int = 3
    radius: int = 4
    max_attempts: Optional[int] = None


class BubbleRequest(_Request):
    p: float
    R: int
    trials: int
    seed: int = 0
    dim: int = 2
    radius: int = 3
    sup_radius: Optional[int] = None
    workers: int = 1
    max_attempts: Optional[int] = None


class ProbeRequest(_Request):
    k: int
    y: list[list[float]]
    n: list[int]
    d: int = 3
    p: float = 0.2
    trials: int = 1000
    seed: int = 0
    workers: int = 1


class VerifyRequest(_Request):
    suite: str
    params: dict[str, Any] = Field(default_factory=dict)


class EstimateOut(BaseModel):
    mean: float
    stderr: float
    samples: int
    seed: Optional[int] = None


class TableOut(BaseModel):
    """Shared shape for sweep results: CSV-able rows plus a JSON summary."""

    header: list[str]
    rows: list[list[Any]]
    summary: dict[str, Any]


class HealthOut(BaseModel):
    status: str
    versions: dict[str, str]
