"""Leaf-labeled binary trees and their cherry reduction.

The census of interest: trees with k labeled leaves ``0..k-1`` whose internal
vertices all have degree three.  Oriented toward leaf 0, every internal
vertex has in-degree two and the census size is the double factorial
``(2k-5)!!``.  A "cherry" is an internal vertex whose two in-edges come from
leaves; repeatedly cutting the distinguished cherry reduces any such tree to
the unique three-leaf tree.
"""

from __future__ import annotations

import json
import re
from typing import Iterator, Sequence


def double_factorial_odd(n: int) -> int:
    """(n)!! for odd n >= -1, with (-1)!! = 1."""
    out = 1
    while n > 1:
        out *= n
        n -= 2
    return out


class AbstractTree:
    """Binary tree with leaves labeled ``0..k-1`` and unlabeled internals.

    Vertex ids: leaves are ``0..k-1``, internal vertices ``k..2k-3``.  Equality
    and hashing go through the canonical form, so two trees are equal exactly
    when they are the same leaf-labeled shape regardless of internal ids.
    """

    __slots__ = ("k", "neighbors", "_canonical")

    def __init__(self, k: int, edges: Sequence[tuple[int, int]]):
        if k < 2:
            raise ValueError("need at least two leaves")
        n_vertices = 2 * k - 2
        if len(edges) != 2 * k - 3:
            raise ValueError(f"expected {2 * k - 3} edges, got {len(edges)}")
        neighbors: dict[int, list[int]] = {v: [] for v in range(n_vertices)}
        for a, b in edges:
            if not (0 <= a < n_vertices and 0 <= b < n_vertices) or a == b:
                raise ValueError(f"bad edge ({a}, {b})")
            neighbors[a].append(b)
            neighbors[b].append(a)
        for leaf in range(k):
            if len(neighbors[leaf]) != 1:
                raise ValueError(f"leaf {leaf} must have degree 1")
        for internal in range(k, n_vertices):
            if len(neighbors[internal]) != 3:
                raise ValueError(f"internal vertex {internal} must have degree 3")
        # connectivity (with the right edge count this also rules out cycles)
        seen = {0}
        frontier = [0]
        while frontier:
            cur = frontier.pop()
            for nbr in neighbors[cur]:
                if nbr not in seen:
                    seen.add(nbr)
                    frontier.append(nbr)
        if len(seen) != n_vertices:
            raise ValueError("tree is not connected")
        self.k = k
        self.neighbors: dict[int, tuple[int, ...]] = {
            v: tuple(sorted(nbrs)) for v, nbrs in neighbors.items()
        }
        self._canonical: str | None = None

    # -- structure -------------------------------------------------------

    @property
    def leaves(self) -> range:
        return range(self.k)

    @property
    def internal_vertices(self) -> range:
        return range(self.k, 2 * self.k - 2)

    def edges(self) -> list[tuple[int, int]]:
        return sorted(
            (v, w) for v, nbrs in self.neighbors.items() for w in nbrs if v < w
        )

    def parent_map(self) -> dict[int, int]:
        """Orientation toward leaf 0: each vertex except leaf 0 gets the
        neighbor on its path to leaf 0."""
        parent: dict[int, int] = {}
        seen = {0}
        frontier = [0]
        while frontier:
            cur = frontier.pop()
            for nbr in self.neighbors[cur]:
                if nbr not in seen:
                    parent[nbr] = cur
                    seen.add(nbr)
                    frontier.append(nbr)
        return parent

    def children(self, parent: dict[int, int] | None = None) -> dict[int, list[int]]:
        parent = parent if parent is not None else self.parent_map()
        out: dict[int, list[int]] = {v: [] for v in self.neighbors}
        for child, par in parent.items():
            out[par].append(child)
        return out

    # -- canonical form and serialization ---------------------------------

    def _render(self, vertex: int, parent: int) -> str:
        if vertex < self.k:
            return str(vertex)
        parts = sorted(
            self._render(nbr, vertex) for nbr in self.neighbors[vertex] if nbr != parent
        )
        return "(" + ",".join(parts) + ")"

    def canonical(self) -> str:
        """Deterministic string form, rooted at leaf 0's unique neighbor."""
        if self._canonical is None:
            anchor = self.neighbors[0][0]
            self._canonical = self._render(anchor, parent=0)
        return self._canonical

    def __eq__(self, other: object) -> bool:
        return (
            isinstance(other, AbstractTree)
            and self.k == other.k
            and self.canonical() == other.canonical()
        )

    def __hash__(self) -> int:
        return hash((self.k, self.canonical()))

    def __repr__(self) -> str:  # pragma: no cover
        return f"AbstractTree(k={self.k}, {self.to_newick()!r})"

    def to_newick(self) -> str:
        return f"(0,{self.canonical()});"

    def to_json_dict(self) -> dict:
        return {"schema": 1, "k": self.k, "edges": [list(e) for e in self.edges()]}

    @staticmethod
    def from_json(payload: str | dict) -> "AbstractTree":
        obj = json.loads(payload) if isinstance(payload, str) else payload
        if obj.get("schema") != 1:
            raise ValueError("unsupported tree schema")
        return AbstractTree(int(obj["k"]), [tuple(e) for e in obj["edges"]])

    @staticmethod
    def from_newick(text: str) -> "AbstractTree":
        return _parse_newick(text)


def _parse_newick(text: str) -> AbstractTree:
    """Parse ``(0,(1,2));``-style trees (binary; a 3-way top level is also
    accepted as the classic unrooted convention)."""
    stripped = text.strip().rstrip(";").replace(" ", "")
    tokens = re.findall(r"\(|\)|,|\d+", stripped)
    if "".join(tokens) != stripped:
        raise ValueError(f"malformed newick {text!r}")

    pos = 0

    def parse_node():
        nonlocal pos
        if pos >= len(tokens):
            raise ValueError("unbalanced parentheses")
        if tokens[pos] == "(":
            pos += 1
            children = [parse_node()]
            while pos < len(tokens) and tokens[pos] == ",":
                pos += 1
                children.append(parse_node())
            if pos >= len(tokens) or tokens[pos] != ")":
                raise ValueError("unbalanced parentheses")
            pos += 1
            return children
        token = tokens[pos]
        if not token.isdigit():
            raise ValueError(f"unexpected token {token!r}")
        pos += 1
        return int(token)

    root = parse_node()
    if pos != len(tokens):
        raise ValueError("trailing tokens in newick")
    if isinstance(root, int):
        raise ValueError("a single leaf is not a tree")

    leaf_labels: list[int] = []

    def collect(node) -> None:
        if isinstance(node, int):
            leaf_labels.append(node)
        else:
            for child in node:
                collect(child)

    collect(root)
    k = len(leaf_labels)
    if sorted(leaf_labels) != list(range(k)):
        raise ValueError("leaves must be labeled 0..k-1 exactly once")

    edges: list[tuple[int, int]] = []
    next_internal = k

    def build(node) -> int:
        """Return the vertex id for a subtree top, creating internals."""
        nonlocal next_internal
        if isinstance(node, int):
            return node
        if len(node) != 2:
            raise ValueError("internal vertices must be binary below the top level")
        vid = next_internal
        next_internal += 1
        for child in node:
            edges.append((vid, build(child)))
        return vid

    if len(root) == 2:
        # the top level marks an edge split; join the two sides directly
        a, b = (build(child) for child in root)
        edges.append((a, b))
    elif len(root) == 3:
        vid = next_internal
        next_internal += 1
        for child in root:
            edges.append((vid, build(child)))
    else:
        raise ValueError("top level must have two or three children")
    return AbstractTree(k, edges)


def three_leaf_tree() -> AbstractTree:
    return AbstractTree(3, [(0, 3), (1, 3), (2, 3)])


def enumerate_trees(k: int) -> list[AbstractTree]:
    """All leaf-labeled binary trees on k >= 3 leaves, (2k-5)!! of them.

    Built by inserting leaf m into every edge of every tree on m leaves; the
    order is deterministic.
    """
    if k < 3:
        raise ValueError("the census starts at k = 3")

    # work representation: edge list over leaf ids 0..m-1 and negative internals
    work: list[list[tuple[int, int]]] = [[(0, 1)]]
    next_internal = -1
    for m in range(2, k):
        new_work: list[list[tuple[int, int]]] = []
        for edges in work:
            for split in range(len(edges)):
                a, b = edges[split]
                mid = next_internal
                rest = edges[:split] + edges[split + 1:]
                new_work.append(rest + [(a, mid), (b, mid), (mid, m)])
            # ids may repeat across siblings; they are relabeled below
        next_internal -= 1
        work = new_work

    out = []
    for edges in work:
        internals = sorted({v for e in edges for v in e if v < 0}, reverse=True)
        remap = {old: k + i for i, old in enumerate(internals)}
        out.append(
            AbstractTree(k, [(remap.get(a, a), remap.get(b, b)) for a, b in edges])
        )
    return out


def select_cherry(tree: AbstractTree) -> tuple[int, int, int]:
    """The distinguished cherry ``(I, J, v)``.

    Among internal vertices whose two in-edges (toward-leaf-0 orientation)
    come from leaves, I is the largest such leaf label anywhere, v its
    neighbor, J the sibling leaf.  Leaf 0 is never an in-neighbor, so
    I, J >= 1 automatically.
    """
    if tree.k < 3:
        raise ValueError("cherry selection needs k >= 3")
    parent = tree.parent_map()
    children = tree.children(parent)
    best: tuple[int, int, int] | None = None
    for v in tree.internal_vertices:
        kids = children[v]
        if len(kids) == 2 and all(c < tree.k for c in kids):
            i_leaf, j_leaf = max(kids), min(kids)
            if best is None or i_leaf > best[0]:
                best = (i_leaf, j_leaf, v)
    if best is None:
        raise AssertionError("every tree in the census has a cherry")
    return best


def cherry_reduce(tree: AbstractTree) -> AbstractTree:
    """Cut the distinguished cherry and relabel.

    Leaves I and J are removed, their junction v becomes the new largest
    leaf ``k-2``, and surviving labels close ranks preserving order.  Defined
    for k >= 4; the three-leaf tree is the recursion's base case.
    """
    if tree.k < 4:
        raise ValueError("reduction is defined for k >= 4")
    i_leaf, j_leaf, v = select_cherry(tree)
    survivors = [leaf for leaf in tree.leaves if leaf not in (i_leaf, j_leaf)]
    new_label = {old: new for new, old in enumerate(sorted(survivors))}

    new_k = tree.k - 1
    internals = [w for w in tree.internal_vertices if w != v]
    vertex_map = {v: new_k - 1}
    vertex_map.update({old: new_label[old] for old in survivors})
    vertex_map.update({old: new_k + i for i, old in enumerate(internals)})

    edges = [
        (vertex_map[a], vertex_map[b])
        for a, b in tree.edges()
        if i_leaf not in (a, b) and j_leaf not in (a, b)
    ]
    return AbstractTree(new_k, edges)


def tree_invariants(tree: AbstractTree) -> dict[str, int]:
    """Edge and internal-vertex counts used as exponents downstream."""
    return {
        "leaves": tree.k,
        "internal": len(tree.internal_vertices),
        "edges": len(tree.edges()),
    }
