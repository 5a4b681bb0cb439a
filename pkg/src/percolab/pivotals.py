"""Pivotal edges of open connections.

An open edge is pivotal for ``u <-> v`` when closing it disconnects u from v.
Every open u -> v path traverses all pivotal edges, in the same order and the
same direction, so pivotal edges carry a canonical orientation (tail = the
endpoint reached first from u) and a canonical linear order ("distance" from
u).  Two independent implementations are kept side by side: a bridge-tree
fast path used everywhere, and the definitional close-and-test scan used as
the cross-check oracle.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .lattice import Configuration, LatticePoint, _as_point, connected, open_path

DirectedEdge = tuple[LatticePoint, LatticePoint]


@dataclass(frozen=True)
class PivotalList:
    """Pivotal edges of one connection, ordered outward from the source."""

    source: LatticePoint
    target: LatticePoint
    edges: tuple[DirectedEdge, ...]

    @property
    def tails(self) -> tuple[LatticePoint, ...]:
        return tuple(tail for tail, _ in self.edges)

    def __len__(self) -> int:
        return len(self.edges)


def _open_bridges(config: Configuration) -> set[int]:
    """Bridge edge ids of the open subgraph (iterative low-link DFS)."""
    graph = config.graph
    mask = config.open_mask
    n = graph.n_vertices
    preorder = [-1] * n
    low = [0] * n
    counter = 0
    bridges: set[int] = set()

    for start in range(n):
        if preorder[start] != -1:
            continue
        stack: list[tuple[int, int, int]] = [(start, -1, 0)]  # vertex, entry edge, next child slot
        while stack:
            vertex, entry_edge, slot = stack.pop()
            if slot == 0:
                preorder[vertex] = low[vertex] = counter
                counter += 1
            advanced = False
            neighbors = graph.adjacency[vertex]
            while slot < len(neighbors):
                eid, nbr = neighbors[slot]
                slot += 1
                if not mask[eid] or eid == entry_edge:
                    continue
                if preorder[nbr] == -1:
                    stack.append((vertex, entry_edge, slot))
                    stack.append((nbr, eid, 0))
                    advanced = True
                    break
                low[vertex] = min(low[vertex], preorder[nbr])
            if advanced or not stack:
                continue
            # vertex finished: fold its low value into the parent frame
            parent, parent_entry, _ = stack[-1]
            low[parent] = min(low[parent], low[vertex])
            if entry_edge != -1 and low[vertex] > preorder[parent]:
                bridges.add(entry_edge)
    return bridges


def two_edge_connected_labels(config: Configuration) -> np.ndarray:
    """Label vertices by 2-edge-connected component of the open subgraph.

    Two distinct vertices admit two edge-disjoint open paths between them
    exactly when their labels agree.
    """
    graph = config.graph
    mask = config.open_mask
    bridges = _open_bridges(config)
    labels = np.full(graph.n_vertices, -1, dtype=np.int64)
    current = 0
    for start in range(graph.n_vertices):
        if labels[start] != -1:
            continue
        labels[start] = current
        queue = deque([start])
        while queue:
            cur = queue.popleft()
            for eid, nbr in graph.adjacency[cur]:
                if not mask[eid] or eid in bridges or labels[nbr] != -1:
                    continue
                labels[nbr] = current
                queue.append(nbr)
        current += 1
    return labels


def open_pivotals(config: Configuration, u: Sequence[int], v: Sequence[int]) -> PivotalList:
    """Pivotal edges of ``u <-> v`` via the bridge tree of the open subgraph.

    Requires u and v to be connected.  The result lists directed edges in
    traversal order from u.
    """
    graph = config.graph
    pu, pv = _as_point(u), _as_point(v)
    ui, vi = graph.index[pu], graph.index[pv]
    if not connected(config, pu, pv):
        raise ValueError(f"{pu} and {pv} are not connected")
    if ui == vi:
        return PivotalList(pu, pv, ())

    labels = two_edge_connected_labels(config)
    bridges = _open_bridges(config)
    if labels[ui] == labels[vi]:
        return PivotalList(pu, pv, ())

    # bridge tree on component labels, then the unique comp(u) -> comp(v) path
    tree: dict[int, list[tuple[int, int, int]]] = {}  # label -> (other, eid, tail_vertex)
    for eid in bridges:
        i, j = graph.edges[eid]
        li, lj = int(labels[i]), int(labels[j])
        tree.setdefault(li, []).append((lj, eid, i))
        tree.setdefault(lj, []).append((li, eid, j))

    start, goal = int(labels[ui]), int(labels[vi])
    prev: dict[int, tuple[int, int, int]] = {start: (-1, -1, -1)}
    queue = deque([start])
    while queue and goal not in prev:
        cur = queue.popleft()
        for other, eid, tail_vertex in tree.get(cur, ()):
            if other in prev:
                continue
            prev[other] = (cur, eid, tail_vertex)
            queue.append(other)

    path_edges: list[DirectedEdge] = []
    node = goal
    while node != start:
        _, eid, tail_vertex = prev[node]
        i, j = graph.edges[eid]
        head_vertex = j if tail_vertex == i else i
        path_edges.append((graph.vertices[tail_vertex], graph.vertices[head_vertex]))
        node = prev[node][0]
    path_edges.reverse()
    return PivotalList(pu, pv, tuple(path_edges))


def open_pivotals_definitional(
    config: Configuration, u: Sequence[int], v: Sequence[int]
) -> PivotalList:
    """Close-and-test oracle for pivotal edges.

    Each open edge is closed in turn and the connection re-tested.  The
    orientation and order are read off the canonical BFS open path, on which
    every pivotal edge must appear.
    """
    graph = config.graph
    pu, pv = _as_point(u), _as_point(v)
    if not connected(config, pu, pv):
        raise ValueError(f"{pu} and {pv} are not connected")
    if pu == pv:
        return PivotalList(pu, pv, ())

    pivotal_ids = []
    base = np.array(config.open_mask)
    for eid in np.flatnonzero(config.open_mask):
        base[eid] = False
        if not connected(Configuration(graph, base, config.p), pu, pv):
            pivotal_ids.append(int(eid))
        base[eid] = True

    canonical = open_path(config, pu, pv)
    assert canonical is not None
    step_of = {}
    for pos in range(len(canonical) - 1):
        a, b = canonical[pos], canonical[pos + 1]
        step_of[frozenset((a, b))] = (pos, a, b)

    ordered = []
    for eid in pivotal_ids:
        i, j = graph.edges[eid]
        key = frozenset((graph.vertices[i], graph.vertices[j]))
        if key not in step_of:
            raise AssertionError("pivotal edge missing from a u->v open path")
        ordered.append(step_of[key])
    ordered.sort()
    return PivotalList(pu, pv, tuple((a, b) for _, a, b in ordered))


def common_pivotal_extremes(
    config: Configuration, u: Sequence[int], targets: Sequence[Sequence[int]]
) -> tuple[Optional[DirectedEdge], Optional[DirectedEdge]]:
    """First and last edge pivotal for every connection ``u <-> t``.

    Returns ``(None, None)`` when u is not connected to all targets or when
    the pivotal sets have empty intersection.  Orientation and order are
    inherited from the source side and agree across targets.
    """
    pu = _as_point(u)
    per_target: list[PivotalList] = []
    for t in targets:
        if not connected(config, pu, t):
            return None, None
        per_target.append(open_pivotals(config, pu, t))
    if not per_target:
        return None, None

    common = set(per_target[0].edges)
    for plist in per_target[1:]:
        common &= set(plist.edges)
    if not common:
        return None, None
    ordered = [e for e in per_target[0].edges if e in common]
    return ordered[0], ordered[-1]
