"""Connectivity trees of multi-point open connections.

Given a configuration in which marked vertices ``x_0..x_k`` all lie in one
open cluster, the connections from each ``x_i`` back to ``x_0`` merge at
well-defined junctions.  The construction records, per target ``x_i``, the
tails of the pivotal edges of ``x_i <-> x_0`` (traversal order from ``x_i``),
takes for each pair the earliest common tail as the merge point (falling back
to ``x_0``), and parents every vertex to the nearest vertex that lies on all
of its open paths to ``x_0``.  The result is always a tree rooted at ``x_0``;
it is "binary" when every marked vertex is a leaf and every junction has
exactly two children, and degenerate otherwise.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .lattice import Configuration, LatticePoint, _as_point, connected, open_path
from .pivotals import open_pivotals
from .trees import AbstractTree

DEGENERATE_MARKED = "marked-not-leaf"
DEGENERATE_INDEGREE = "indegree-ge-3"


@dataclass(frozen=True)
class ConnTree:
    """Rooted tree on lattice points: marked vertices plus merge junctions."""

    marked: tuple[LatticePoint, ...]          # x_0 first
    points: tuple[LatticePoint, ...]          # all tree vertices, root first
    parent: dict[LatticePoint, LatticePoint]  # every vertex except the root

    @property
    def root(self) -> LatticePoint:
        return self.marked[0]

    def children_map(self) -> dict[LatticePoint, list[LatticePoint]]:
        out: dict[LatticePoint, list[LatticePoint]] = {p: [] for p in self.points}
        for child, par in sorted(self.parent.items()):
            out[par].append(child)
        return out

    def to_json_dict(self) -> dict:
        order = {p: i for i, p in enumerate(self.points)}
        return {
            "schema": 1,
            "points": [list(p) for p in self.points],
            "marked": [order[p] for p in self.marked],
            "parent": {str(order[c]): order[p] for c, p in sorted(self.parent.items())},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict())


@dataclass(frozen=True)
class TreeClassification:
    kind: str                          # "binary" | "degenerate"
    reason: Optional[str] = None       # set when degenerate
    shape: Optional[AbstractTree] = None  # set when binary


def _pivotal_tail_positions(
    config: Configuration, source: LatticePoint, root: LatticePoint
) -> dict[LatticePoint, int]:
    """Tails of the pivotal edges of ``source <-> root``, with their rank in
    traversal order from ``source`` (first occurrence wins)."""
    ranks: dict[LatticePoint, int] = {}
    for rank, (tail, _) in enumerate(open_pivotals(config, source, root).edges):
        ranks.setdefault(tail, rank)
    return ranks


def _on_every_open_path(
    config: Configuration, v: LatticePoint, root: LatticePoint, w: LatticePoint
) -> bool:
    """Does w lie on every open path from v to root?"""
    if w == root:
        return True
    if w == v:
        return False
    region = [p for p in config.graph.vertices if p != w]
    return not connected(config, v, root, region=region)


def build_connectivity_tree(
    config: Configuration, marked: Sequence[Sequence[int]]
) -> ConnTree:
    """Connectivity tree of the marked vertices (root = first entry).

    Requires at least two distinct marked vertices, all in one open cluster.
    """
    points = [_as_point(p) for p in marked]
    if len(points) < 2:
        raise ValueError("need a root and at least one marked target")
    if len(set(points)) != len(points):
        raise ValueError("marked vertices must be distinct")
    root = points[0]
    targets = points[1:]
    for t in targets:
        if not connected(config, root, t):
            raise ValueError(f"{t} is not connected to the root {root}")

    tails = {t: _pivotal_tail_positions(config, t, root) for t in targets}

    merge_points: set[LatticePoint] = set()
    for a_pos in range(len(targets)):
        for b_pos in range(a_pos + 1, len(targets)):
            a, b = targets[a_pos], targets[b_pos]
            common = tails[a].keys() & tails[b].keys()
            if common:
                merge_points.add(min(common, key=lambda w: tails[a][w]))
            else:
                merge_points.add(root)

    vertex_set = set(points) | merge_points
    parent: dict[LatticePoint, LatticePoint] = {}
    for v in vertex_set:
        if v == root:
            continue
        canonical = open_path(config, v, root)
        assert canonical is not None
        position = {p: i for i, p in enumerate(canonical)}
        candidates = [
            w for w in vertex_set
            if w != v and w in position and position[w] > 0
            and _on_every_open_path(config, v, root, w)
        ]
        parent[v] = min(candidates, key=lambda w: position[w])

    ordered = [root] + sorted(vertex_set - {root})
    return ConnTree(tuple(points), tuple(ordered), parent)


def classify_tree(tree: ConnTree) -> TreeClassification:
    """Binary-or-degenerate classification, with the degeneracy reason.

    Reasons, checked in order: a marked vertex fails to be a leaf
    (``marked-not-leaf``), or a junction has three or more children
    (``indegree-ge-3``).  Otherwise every junction must have exactly two
    children and the leaf-labeled shape is returned.
    """
    children = tree.children_map()
    root = tree.root
    marked_set = set(tree.marked)

    if len(children[root]) != 1 or any(
        children[m] for m in tree.marked[1:]
    ):
        return TreeClassification("degenerate", reason=DEGENERATE_MARKED)
    if any(len(kids) >= 3 for kids in children.values()):
        return TreeClassification("degenerate", reason=DEGENERATE_INDEGREE)
    for p, kids in children.items():
        if p not in marked_set and len(kids) != 1 + 1:
            raise AssertionError(
                f"junction {p} has in-degree {len(kids)}; the construction "
                "should never produce in-degree one"
            )

    # map to the abstract leaf-labeled shape: marked vertex i -> leaf i
    k = len(tree.marked)
    junctions = [p for p in tree.points if p not in marked_set]
    ids = {p: i for i, p in enumerate(tree.marked)}
    ids.update({p: k + i for i, p in enumerate(junctions)})
    edges = [(ids[c], ids[p]) for c, p in tree.parent.items()]
    return TreeClassification("binary", shape=AbstractTree(k, edges))


def rejection_sample_connected(
    graph, p: float, marked: Sequence[Sequence[int]], seed: int,
    stream_index: int = 0, max_attempts: int = 10_000_000,
):
    """Sample a configuration conditioned on all marked vertices being in one
    open cluster, by rejection.  Returns (configuration, attempts)."""
    from .lattice import sample_configuration

    points = [_as_point(x) for x in marked]
    for attempt in range(1, max_attempts + 1):
        config = sample_configuration(graph, p, seed, stream_index * 1_000_003 + attempt)
        if all(connected(config, points[0], t) for t in points[1:]):
            return config, attempt
    raise RuntimeError(f"no connected configuration in {max_attempts} attempts")
