"""Finite bond-percolation configurations on boxes and hand-built graphs.

Vertices are integer lattice points (tuples), edges are undirected nearest
pairs or arbitrary hand-built pairs; the boundary is always free.  A
configuration stores one immutable status bit per undirected edge.  Region
arguments restrict *every* vertex of a path, endpoints included.
"""

from __future__ import annotations

import hashlib
import itertools
import json
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Iterator, Optional, Sequence

import numpy as np

from .rng import stream

LatticePoint = tuple[int, ...]

#: Exhaustive enumeration refuses graphs with more edges than this.
MAX_ENUM_EDGES = 24

#: ``disjointly_occurs`` accepts at most this many demands.
MAX_DISJOINT_DEMANDS = 4


def _as_point(value: Sequence[int]) -> LatticePoint:
    return tuple(int(c) for c in value)


class Graph:
    """Immutable undirected graph whose vertices are lattice points.

    Vertices are stored sorted lexicographically and edges sorted as index
    pairs, so two graphs built from the same vertex/edge sets in any order
    have identical indexing and identical content hashes.
    """

    __slots__ = ("vertices", "edges", "dim", "index", "adjacency", "box_center",
                 "box_radius", "_hash")

    def __init__(
        self,
        vertices: Iterable[Sequence[int]],
        edges: Iterable[tuple[Sequence[int], Sequence[int]]],
        box_center: Optional[LatticePoint] = None,
        box_radius: Optional[int] = None,
    ):
        points = sorted({_as_point(v) for v in vertices})
        if not points:
            raise ValueError("graph needs at least one vertex")
        dims = {len(p) for p in points}
        if len(dims) != 1:
            raise ValueError("all vertices must share one dimension")
        self.vertices: tuple[LatticePoint, ...] = tuple(points)
        self.dim = dims.pop()
        self.index = {p: i for i, p in enumerate(self.vertices)}

        pairs = set()
        for u, v in edges:
            pu, pv = _as_point(u), _as_point(v)
            if pu == pv:
                raise ValueError(f"self-loop at {pu}")
            if pu not in self.index or pv not in self.index:
                raise ValueError(f"edge endpoint not a vertex: {pu} {pv}")
            i, j = self.index[pu], self.index[pv]
            pairs.add((min(i, j), max(i, j)))
        self.edges: tuple[tuple[int, int], ...] = tuple(sorted(pairs))

        adjacency: list[list[tuple[int, int]]] = [[] for _ in self.vertices]
        for eid, (i, j) in enumerate(self.edges):
            adjacency[i].append((eid, j))
            adjacency[j].append((eid, i))
        self.adjacency: tuple[tuple[tuple[int, int], ...], ...] = tuple(
            tuple(nbrs) for nbrs in adjacency
        )
        self.box_center = _as_point(box_center) if box_center is not None else None
        self.box_radius = box_radius
        self._hash: Optional[str] = None

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def content_hash(self) -> str:
        """Stable hex digest of the vertex and edge sets."""
        if self._hash is None:
            payload = repr((self.vertices, self.edges)).encode()
            self._hash = hashlib.sha256(payload).hexdigest()[:16]
        return self._hash

    def edge_index(self, u: Sequence[int], v: Sequence[int]) -> int:
        i, j = self.index[_as_point(u)], self.index[_as_point(v)]
        key = (min(i, j), max(i, j))
        try:
            return self.edges.index(key)
        except ValueError:
            raise KeyError(f"no edge between {tuple(u)} and {tuple(v)}") from None

    def boundary_vertices(self) -> tuple[LatticePoint, ...]:
        """Vertices on the outer shell of a box graph."""
        if self.box_center is None or self.box_radius is None:
            raise ValueError("graph was not built as a box")
        c, r = self.box_center, self.box_radius
        return tuple(
            v for v in self.vertices if max(abs(a - b) for a, b in zip(v, c)) == r
        )

    def __repr__(self) -> str:  # pragma: no cover
        return f"Graph(|V|={self.n_vertices}, |E|={self.n_edges}, dim={self.dim})"


def box(dim: int, radius: int, center: Sequence[int] | None = None) -> Graph:
    """Lattice box of the given sup-norm radius with nearest-neighbor bonds."""
    if dim < 1 or radius < 0:
        raise ValueError("need dim >= 1 and radius >= 0")
    c = _as_point(center) if center is not None else (0,) * dim
    ranges = [range(cc - radius, cc + radius + 1) for cc in c]
    vertices = [tuple(p) for p in itertools.product(*ranges)]
    vertex_set = set(vertices)
    edges = []
    for v in vertices:
        for axis in range(dim):
            w = v[:axis] + (v[axis] + 1,) + v[axis + 1:]
            if w in vertex_set:
                edges.append((v, w))
    return Graph(vertices, edges, box_center=c, box_radius=radius)


def vertices_within(graph: Graph, center: Sequence[int], radius: int) -> frozenset[LatticePoint]:
    """Graph vertices within sup-norm ``radius`` of ``center``."""
    c = _as_point(center)
    return frozenset(
        v for v in graph.vertices if max(abs(a - b) for a, b in zip(v, c)) <= radius
    )


# -- edge-list text format ----------------------------------------------------
#
# One edge per line: two parenthesized integer tuples, e.g. ``(0,0) (0,1)``.
# Blank lines and ``#`` comments are ignored.

def _parse_point(token: str) -> LatticePoint:
    token = token.strip()
    if not (token.startswith("(") and token.endswith(")")):
        raise ValueError(f"malformed vertex {token!r}")
    inner = token[1:-1].strip().rstrip(",")
    if not inner:
        raise ValueError(f"empty vertex {token!r}")
    return tuple(int(part) for part in inner.split(","))


def graph_from_edge_text(text: str) -> Graph:
    """Parse the one-``u v``-pair-per-line edge-list format."""
    edges = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        depth, split_at = 0, None
        for pos, ch in enumerate(line):
            if ch == "(":
                depth += 1
            elif ch == ")":
                depth -= 1
                if depth == 0 and split_at is None:
                    split_at = pos + 1
                    break
        if split_at is None:
            raise ValueError(f"line {lineno}: expected two vertex tuples")
        u, v = line[:split_at], line[split_at:]
        edges.append((_parse_point(u), _parse_point(v)))
    if not edges:
        raise ValueError("edge list is empty")
    vertices = {p for e in edges for p in e}
    return Graph(vertices, edges)


def graph_to_edge_text(graph: Graph) -> str:
    lines = []
    for i, j in graph.edges:
        u, v = graph.vertices[i], graph.vertices[j]
        lines.append(f"({','.join(map(str, u))}) ({','.join(map(str, v))})")
    return "\n".join(lines) + "\n"


# -- configurations -----------------------------------------------------------


class Configuration:
    """One percolation outcome: an immutable open/closed bit per edge."""

    __slots__ = ("graph", "open_mask", "p")

    def __init__(self, graph: Graph, open_mask: np.ndarray, p: float):
        if not 0.0 <= p <= 1.0:
            raise ValueError("p must lie in [0, 1]")
        mask = np.asarray(open_mask, dtype=bool).copy()
        if mask.shape != (graph.n_edges,):
            raise ValueError("open_mask length must equal the edge count")
        mask.setflags(write=False)
        self.graph = graph
        self.open_mask = mask
        self.p = float(p)

    def is_open(self, u: Sequence[int], v: Sequence[int]) -> bool:
        return bool(self.open_mask[self.graph.edge_index(u, v)])

    def open_edge_ids(self) -> np.ndarray:
        return np.flatnonzero(self.open_mask)

    def weight(self) -> float:
        """Probability of this exact outcome under its own ``p``."""
        n_open = int(self.open_mask.sum())
        return self.p**n_open * (1.0 - self.p) ** (self.graph.n_edges - n_open)

    def __repr__(self) -> str:  # pragma: no cover
        return f"Configuration(open={int(self.open_mask.sum())}/{self.graph.n_edges}, p={self.p})"


def sample_configuration(graph: Graph, p: float, seed: int, stream_index: int = 0) -> Configuration:
    """Draw one i.i.d.-bond configuration from stream ``(seed, stream_index)``."""
    gen = stream(seed, stream_index)
    mask = gen.random(graph.n_edges) < p
    return Configuration(graph, mask, p)


def sample_open_masks(
    graph: Graph, p: float, seed: int, trials: int, stream_index: int = 0
) -> np.ndarray:
    """Vectorized sampling: a ``(trials, n_edges)`` boolean array from one stream."""
    gen = stream(seed, stream_index)
    return gen.random((trials, graph.n_edges)) < p


def enumerate_configurations(graph: Graph, p: float) -> Iterator[tuple[Configuration, float]]:
    """Yield every configuration with its probability; weights sum to one.

    Refuses graphs above ``MAX_ENUM_EDGES`` edges.
    """
    m = graph.n_edges
    if m > MAX_ENUM_EDGES:
        raise ValueError(f"{m} edges exceeds the enumeration guard ({MAX_ENUM_EDGES})")
    edge_bits = np.arange(m, dtype=np.uint32)
    for bits in range(1 << m):
        mask = (bits >> edge_bits) & 1 == 1
        n_open = int(mask.sum())
        weight = p**n_open * (1.0 - p) ** (m - n_open)
        yield Configuration(graph, mask, p), weight


def config_to_json(config: Configuration, seed: int | None = None) -> str:
    """Serialize a configuration as a bit-string with an identifying header."""
    payload = {
        "schema": 1,
        "graph_hash": config.graph.content_hash(),
        "p": config.p,
        "seed": seed,
        "bits": "".join("1" if b else "0" for b in config.open_mask),
    }
    return json.dumps(payload)


def config_from_json(graph: Graph, text: str) -> Configuration:
    payload = json.loads(text)
    if payload.get("schema") != 1:
        raise ValueError("unsupported configuration schema")
    if payload["graph_hash"] != graph.content_hash():
        raise ValueError("configuration belongs to a different graph")
    bits = payload["bits"]
    if len(bits) != graph.n_edges or set(bits) - {"0", "1"}:
        raise ValueError("malformed bit-string")
    mask = np.array([c == "1" for c in bits], dtype=bool)
    return Configuration(graph, mask, payload["p"])


# -- cluster structure --------------------------------------------------------


@dataclass(frozen=True)
class ClusterPartition:
    """Partition of the vertices into open clusters.

    ``root`` maps each vertex index to its cluster representative (the
    smallest vertex index in the cluster); ``sizes`` maps representatives to
    cluster sizes.
    """

    graph: Graph
    root: tuple[int, ...]
    sizes: dict[int, int]

    def same_cluster(self, x: Sequence[int], y: Sequence[int]) -> bool:
        return self.root[self.graph.index[_as_point(x)]] == self.root[self.graph.index[_as_point(y)]]

    def representative(self, x: Sequence[int]) -> LatticePoint:
        return self.graph.vertices[self.root[self.graph.index[_as_point(x)]]]

    def cluster_of(self, x: Sequence[int]) -> frozenset[LatticePoint]:
        r = self.root[self.graph.index[_as_point(x)]]
        return frozenset(
            v for i, v in enumerate(self.graph.vertices) if self.root[i] == r
        )

    def size_of(self, x: Sequence[int]) -> int:
        return self.sizes[self.root[self.graph.index[_as_point(x)]]]


def clusters(config: Configuration) -> ClusterPartition:
    """Open-cluster partition via union by size with path compression."""
    graph = config.graph
    parent = list(range(graph.n_vertices))
    size = [1] * graph.n_vertices

    def find(a: int) -> int:
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for eid in np.flatnonzero(config.open_mask):
        i, j = graph.edges[eid]
        ri, rj = find(i), find(j)
        if ri != rj:
            if size[ri] < size[rj]:
                ri, rj = rj, ri
            parent[rj] = ri
            size[ri] += size[rj]

    # normalize representatives to the smallest index per cluster
    groups: dict[int, list[int]] = {}
    for i in range(graph.n_vertices):
        groups.setdefault(find(i), []).append(i)
    root = [0] * graph.n_vertices
    sizes: dict[int, int] = {}
    for members in groups.values():
        rep = min(members)
        sizes[rep] = len(members)
        for i in members:
            root[i] = rep
    return ClusterPartition(graph, tuple(root), sizes)


# -- connectivity predicates --------------------------------------------------


def _region_indices(graph: Graph, region: Optional[Iterable[Sequence[int]]]) -> Optional[set[int]]:
    if region is None:
        return None
    out = set()
    for p in region:
        idx = graph.index.get(_as_point(p))
        if idx is not None:
            out.add(idx)
    return out


def _open_adjacency(config: Configuration) -> list[list[tuple[int, int]]]:
    graph = config.graph
    mask = config.open_mask
    return [
        [(eid, nbr) for eid, nbr in graph.adjacency[i] if mask[eid]]
        for i in range(graph.n_vertices)
    ]


def connected(
    config: Configuration,
    x: Sequence[int],
    y: Sequence[int],
    region: Optional[Iterable[Sequence[int]]] = None,
) -> bool:
    """Is there an open path from x to y with every vertex inside ``region``?

    Endpoints count as path vertices: if either lies outside the region the
    event fails, except that ``x == y`` inside the region holds trivially.
    """
    graph = config.graph
    xi, yi = graph.index[_as_point(x)], graph.index[_as_point(y)]
    allowed = _region_indices(graph, region)
    if allowed is not None and (xi not in allowed or yi not in allowed):
        return False
    if xi == yi:
        return True
    mask = config.open_mask
    seen = {xi}
    queue = deque([xi])
    while queue:
        cur = queue.popleft()
        for eid, nbr in graph.adjacency[cur]:
            if not mask[eid] or nbr in seen:
                continue
            if allowed is not None and nbr not in allowed:
                continue
            if nbr == yi:
                return True
            seen.add(nbr)
            queue.append(nbr)
    return False


def connected_any(
    config: Configuration,
    x: Sequence[int],
    targets: Iterable[Sequence[int]],
    region: Optional[Iterable[Sequence[int]]] = None,
) -> bool:
    """Is x openly connected (within ``region``) to at least one target?"""
    graph = config.graph
    xi = graph.index[_as_point(x)]
    goal = {graph.index[_as_point(t)] for t in targets}
    if not goal:
        return False
    allowed = _region_indices(graph, region)
    if allowed is not None and xi not in allowed:
        return False
    if allowed is not None:
        goal &= allowed
    if xi in goal:
        return True
    mask = config.open_mask
    seen = {xi}
    queue = deque([xi])
    while queue:
        cur = queue.popleft()
        for eid, nbr in graph.adjacency[cur]:
            if not mask[eid] or nbr in seen:
                continue
            if allowed is not None and nbr not in allowed:
                continue
            if nbr in goal:
                return True
            seen.add(nbr)
            queue.append(nbr)
    return False


def open_path(
    config: Configuration,
    x: Sequence[int],
    y: Sequence[int],
    region: Optional[Iterable[Sequence[int]]] = None,
) -> Optional[list[LatticePoint]]:
    """One canonical shortest open path x -> y (BFS order), or None.

    Ties are broken by vertex index, so the returned path depends only on the
    configuration, never on traversal randomness.
    """
    graph = config.graph
    xi, yi = graph.index[_as_point(x)], graph.index[_as_point(y)]
    allowed = _region_indices(graph, region)
    if allowed is not None and (xi not in allowed or yi not in allowed):
        return None
    if xi == yi:
        return [graph.vertices[xi]]
    mask = config.open_mask
    prev: dict[int, int] = {xi: -1}
    queue = deque([xi])
    while queue:
        cur = queue.popleft()
        for eid, nbr in graph.adjacency[cur]:  # adjacency is index-sorted
            if not mask[eid] or nbr in prev:
                continue
            if allowed is not None and nbr not in allowed:
                continue
            prev[nbr] = cur
            if nbr == yi:
                path = [nbr]
                while path[-1] != xi:
                    path.append(prev[path[-1]])
                return [graph.vertices[i] for i in reversed(path)]
            queue.append(nbr)
    return None


def doubly_connected(
    config: Configuration,
    x: Sequence[int],
    y: Sequence[int],
    region: Optional[Iterable[Sequence[int]]] = None,
) -> bool:
    """Two edge-disjoint open paths x -> y inside ``region``.

    Decided as max-flow >= 2 with unit capacities on open edges; ``x == y``
    holds by the empty-double-connection convention.
    """
    graph = config.graph
    xi, yi = graph.index[_as_point(x)], graph.index[_as_point(y)]
    allowed = _region_indices(graph, region)
    if allowed is not None and (xi not in allowed or yi not in allowed):
        return False
    if xi == yi:
        return True
    mask = config.open_mask

    # residual capacity per (edge, direction): direction 0 = low->high index
    residual = {}
    for eid in np.flatnonzero(mask):
        i, j = graph.edges[eid]
        if allowed is not None and (i not in allowed or j not in allowed):
            continue
        residual[(eid, 0)] = 1
        residual[(eid, 1)] = 1

    def augment() -> bool:
        prev_edge: dict[int, tuple[int, int, int]] = {}  # node -> (eid, direction, from)
        seen = {xi}
        queue = deque([xi])
        while queue:
            cur = queue.popleft()
            for eid, nbr in graph.adjacency[cur]:
                i, _ = graph.edges[eid]
                direction = 0 if cur == i else 1
                if residual.get((eid, direction), 0) <= 0 or nbr in seen:
                    continue
                seen.add(nbr)
                prev_edge[nbr] = (eid, direction, cur)
                if nbr == yi:
                    node = yi
                    while node != xi:
                        peid, pdir, pfrom = prev_edge[node]
                        residual[(peid, pdir)] -= 1
                        residual[(peid, 1 - pdir)] += 1
                        node = pfrom
                    return True
                queue.append(nbr)
        return False

    return augment() and augment()


@dataclass(frozen=True)
class ConnectionDemand:
    """One connection event ``source <-> target`` (optionally in a region)."""

    source: LatticePoint
    target: LatticePoint
    region: Optional[frozenset[LatticePoint]] = None

    @staticmethod
    def of(source: Sequence[int], target: Sequence[int],
           region: Optional[Iterable[Sequence[int]]] = None) -> "ConnectionDemand":
        reg = frozenset(_as_point(p) for p in region) if region is not None else None
        return ConnectionDemand(_as_point(source), _as_point(target), reg)


def _simple_open_paths(
    config: Configuration, demand: ConnectionDemand
) -> list[int]:
    """All simple open paths for a demand, as edge bitmasks."""
    graph = config.graph
    xi = graph.index[demand.source]
    yi = graph.index[demand.target]
    allowed = _region_indices(graph, demand.region)
    if allowed is not None and (xi not in allowed or yi not in allowed):
        return []
    if xi == yi:
        return [0]
    mask = config.open_mask
    out: list[int] = []
    path_vertices = {xi}

    def extend(cur: int, used_edges: int) -> None:
        for eid, nbr in graph.adjacency[cur]:
            if not mask[eid] or used_edges >> eid & 1 or nbr in path_vertices:
                continue
            if allowed is not None and nbr not in allowed:
                continue
            if nbr == yi:
                out.append(used_edges | 1 << eid)
                continue
            path_vertices.add(nbr)
            extend(nbr, used_edges | 1 << eid)
            path_vertices.remove(nbr)

    extend(xi, 0)
    return out


def disjointly_occurs(config: Configuration, demands: Sequence[ConnectionDemand]) -> bool:
    """Do all demands occur on pairwise disjoint open witness edge sets?

    Witnesses are simple open paths; the search backtracks over one witness
    per demand with a shared used-edge mask.  At most ``MAX_DISJOINT_DEMANDS``
    demands are accepted.
    """
    if len(demands) > MAX_DISJOINT_DEMANDS:
        raise ValueError(
            f"{len(demands)} demands exceeds the guard ({MAX_DISJOINT_DEMANDS})"
        )
    witness_lists = []
    for demand in demands:
        witnesses = _simple_open_paths(config, demand)
        if not witnesses:
            return False
        witness_lists.append(witnesses)
    witness_lists.sort(key=len)

    def assign(position: int, used: int) -> bool:
        if position == len(witness_lists):
            return True
        for witness in witness_lists[position]:
            if witness & used == 0 and assign(position + 1, used | witness):
                return True
        return False

    return assign(0, 0)
