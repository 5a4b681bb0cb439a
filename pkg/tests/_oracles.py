"""First-principles reference implementations used to cross-check fast code.

Everything below works by closing edges and running scratch breadth-first
searches over the open subgraph.  Nothing here calls the production pivotal
or tree builders it exists to validate; the only shared surface is the
``Graph``/``Configuration`` data layout.
"""

from __future__ import annotations

import itertools
from typing import Optional, Sequence

import numpy as np

from percolab.lattice import Configuration, LatticePoint


def _pt(x: Sequence[int]) -> LatticePoint:
    return tuple(int(c) for c in x)


def reachable_without_edge(
    config: Configuration, start: int, banned_edge: Optional[int] = None
) -> set[int]:
    """Vertex indices reachable from ``start`` with one edge treated closed."""
    graph = config.graph
    mask = config.open_mask
    seen = {start}
    stack = [start]
    while stack:
        cur = stack.pop()
        for eid, nbr in graph.adjacency[cur]:
            if eid == banned_edge or not mask[eid] or nbr in seen:
                continue
            seen.add(nbr)
            stack.append(nbr)
    return seen


def reachable_avoiding_vertex(
    config: Configuration, start: int, avoid: int
) -> set[int]:
    """Vertex indices reachable from ``start`` without ever entering ``avoid``."""
    graph = config.graph
    mask = config.open_mask
    seen = {start}
    stack = [start]
    while stack:
        cur = stack.pop()
        for eid, nbr in graph.adjacency[cur]:
            if not mask[eid] or nbr == avoid or nbr in seen:
                continue
            seen.add(nbr)
            stack.append(nbr)
    return seen


def on_every_open_path(
    config: Configuration, v: int, root: int, w: int
) -> bool:
    """Does ``w`` lie on every open path from ``v`` to ``root``?

    The root qualifies trivially and ``v`` itself never does (the relation
    is used as a strict precedence).  For any other vertex the test is the
    removal characterization: every path passes through ``w`` exactly when
    deleting ``w`` disconnects ``v`` from ``root``.
    """
    if w == root:
        return True
    if w == v:
        return False
    return root not in reachable_avoiding_vertex(config, v, w)


def definitional_pivotal_edges(
    config: Configuration, source: Sequence[int], root: Sequence[int]
) -> list[tuple[LatticePoint, LatticePoint]]:
    """Open pivotal edges of {source <-> root}, ordered outward from source.

    An open edge is pivotal when closing it, and nothing else, disconnects
    the pair.  Its tail is the endpoint left on the source's side of that
    closing.  Pivotal cuts of a single connection are nested, so the edges
    sort by how many of the others precede them: the head of an earlier
    edge stays on the source side whenever a later edge closes.
    """
    graph = config.graph
    s = graph.index[_pt(source)]
    r = graph.index[_pt(root)]
    if r not in reachable_without_edge(config, s):
        return []
    found: list[tuple[int, int, set[int]]] = []
    for eid in np.flatnonzero(config.open_mask):
        side = reachable_without_edge(config, s, int(eid))
        if r in side:
            continue
        i, j = graph.edges[int(eid)]
        tail, head = (i, j) if i in side else (j, i)
        found.append((tail, head, side))

    def predecessors(item: tuple[int, int, set[int]]) -> int:
        head = item[1]
        return sum(1 for other in found if other is not item and head not in other[2])

    # keys must be computed before sorting: list.sort empties the list while
    # it runs, which would starve the key function of its comparisons
    keys = [predecessors(item) for item in found]
    order = sorted(range(len(found)), key=keys.__getitem__)
    return [
        (graph.vertices[found[i][0]], graph.vertices[found[i][1]]) for i in order
    ]


def definitional_conn_tree(
    config: Configuration, marked: Sequence[Sequence[int]]
) -> tuple[list[LatticePoint], dict[LatticePoint, LatticePoint]]:
    """Connectivity tree from the defining construction, done slowly.

    Steps: collect the pivotal tails of each target's connection to the
    root with their outward order; merge each target pair at the first
    common tail (the root when there is none); take the marked vertices
    plus the merge points as the vertex set; attach every non-root vertex
    to the nearest vertex that lies on all of its open paths to the root.

    Returns ``(points, parent)`` with ``points`` root-first then sorted,
    for direct comparison against the production builder's output.
    """
    graph = config.graph
    pts = [_pt(x) for x in marked]
    root = pts[0]
    targets = pts[1:]

    tails: dict[LatticePoint, dict[LatticePoint, int]] = {}
    for t in targets:
        order: dict[LatticePoint, int] = {}
        for rank, (tail, _head) in enumerate(
            definitional_pivotal_edges(config, t, root)
        ):
            order.setdefault(tail, rank)
        tails[t] = order

    merges: set[LatticePoint] = set()
    for a, b in itertools.combinations(targets, 2):
        common = tails[a].keys() & tails[b].keys()
        merges.add(min(common, key=lambda w: tails[a][w]) if common else root)

    vertex_set = set(pts) | merges
    root_idx = graph.index[root]
    parent: dict[LatticePoint, LatticePoint] = {}
    for v in sorted(vertex_set - {root}):
        v_idx = graph.index[v]
        ahead = [
            w
            for w in vertex_set
            if w != v
            and on_every_open_path(config, v_idx, root_idx, graph.index[w])
        ]
        nearest = [
            w
            for w in ahead
            if all(
                u == w
                or on_every_open_path(
                    config, graph.index[w], root_idx, graph.index[u]
                )
                for u in ahead
            )
        ]
        assert len(nearest) == 1, (v, ahead, nearest)
        parent[v] = nearest[0]

    return [root] + sorted(vertex_set - {root}), parent


def tree_shape_is_sane(
    points: Sequence[LatticePoint],
    parent: dict[LatticePoint, LatticePoint],
    marked: Sequence[LatticePoint],
) -> bool:
    """Structural tree invariants: edge count, rooted acyclicity, leaf set."""
    root = marked[0]
    if len(parent) != len(points) - 1:
        return False
    for v in points:
        if v == root:
            continue
        seen = {v}
        cur = v
        while cur != root:
            cur = parent[cur]
            if cur in seen:
                return False
            seen.add(cur)
    with_children = set(parent.values())
    leaves = [v for v in points if v not in with_children]
    return all(leaf in set(marked) for leaf in leaves)
