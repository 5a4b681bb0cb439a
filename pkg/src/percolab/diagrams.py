"""Lattice diagram valuations.

A diagram is a finite multigraph whose vertices are either pinned to lattice
points or free; its value is the sum, over all placements of the free
vertices in a truncation box, of the product of one regularized Riesz kernel
per edge.  Valuations run exactly (coordinate-reduced sums, compensated
accumulation) when the work model allows, and otherwise by importance
sampling with a chained mixture proposal whose components sit on the pinned
vertices and on already-sampled neighbor vertices, matched to the kernel
exponents, plus a small defensive uniform component.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .kernels import (
    bracket,
    bracket_pow_sq,
    kernel_product_sum,
    kernel_sum_work,
    linf_shell_count,
)
from .rng import stream
from .stats import MCEstimate, Moments, merge_moments

#: Exact summation refuses instances above this many summand evaluations.
EXACT_WORK_GUARD = 1.0e9

#: Monte Carlo chunk size; fixed so worker partitioning cannot change results.
MC_CHUNK = 65536

#: Weight of the defensive uniform-over-box proposal component.
UNIFORM_MIX = 0.1


@dataclass(frozen=True)
class Diagram:
    """Multigraph with pinned lattice vertices and free (summed) vertices.

    Edge entries are ``(a, b, exponent)`` with ``exponent=None`` meaning the
    default kernel ``2 - d``, resolved at evaluation time.
    """

    pinned: tuple[tuple[str, tuple[int, ...]], ...]
    free: tuple[str, ...]
    edges: tuple[tuple[str, str, Optional[float]], ...]

    def __post_init__(self):
        names = [name for name, _ in self.pinned] + list(self.free)
        if len(set(names)) != len(names):
            raise ValueError("vertex names must be unique")
        dims = {len(pos) for _, pos in self.pinned}
        if len(dims) > 1:
            raise ValueError("pinned positions must share one dimension")
        known = set(names)
        for a, b, _ in self.edges:
            if a not in known or b not in known:
                raise ValueError(f"edge ({a}, {b}) references unknown vertex")
            if a == b:
                raise ValueError("self-loops are not allowed")

    @property
    def pin_positions(self) -> dict[str, np.ndarray]:
        return {name: np.asarray(pos, dtype=np.int64) for name, pos in self.pinned}

    def degree(self, name: str) -> int:
        return sum(1 for a, b, _ in self.edges if name in (a, b))

    def neighbors(self, name: str) -> list[tuple[str, Optional[float]]]:
        out = []
        for a, b, e in self.edges:
            if a == name:
                out.append((b, e))
            elif b == name:
                out.append((a, e))
        return out

    def default_truncation(self) -> int:
        """Four times the largest pin magnitude (and at least 8)."""
        radius = max(
            (int(np.abs(np.asarray(p)).max()) for _, p in self.pinned), default=1
        )
        return max(4 * radius, 8)


def single_edge_diagram(name_a: str, pos_a, name_b: str, pos_b,
                        exponent: Optional[float] = None) -> Diagram:
    return Diagram(
        pinned=((name_a, tuple(pos_a)), (name_b, tuple(pos_b))),
        free=(),
        edges=((name_a, name_b, exponent),),
    )


def star_diagram(leg_positions: Sequence, center: str = "z") -> Diagram:
    """One free center with a default-kernel leg to each pinned position."""
    pins = tuple((f"w{i}", tuple(p)) for i, p in enumerate(leg_positions))
    return Diagram(
        pinned=pins,
        free=(center,),
        edges=tuple((center, name, None) for name, _ in pins),
    )


def one_loop_diagram(w1, w2, d: int) -> Diagram:
    """Two free vertices joined by a doubled-strength kernel, one pinned leg
    each: the basic loop whose value is power-suppressed in the pin distance."""
    return Diagram(
        pinned=(("w1", tuple(w1)), ("w2", tuple(w2))),
        free=("z0", "z2"),
        edges=(
            ("w1", "z0", None),
            ("z0", "z2", float(8 - 2 * d)),
            ("z2", "w2", None),
        ),
    )


def cycle_diagram(leg_positions: Sequence) -> Diagram:
    """A free cycle with one pinned leg per cycle vertex."""
    m = len(leg_positions)
    if m < 3:
        raise ValueError("a cycle needs at least three legs")
    pins = tuple((f"w{i}", tuple(p)) for i, p in enumerate(leg_positions))
    free = tuple(f"z{i}" for i in range(m))
    edges = [(f"z{i}", f"z{(i + 1) % m}", None) for i in range(m)]
    edges += [(f"z{i}", f"w{i}", None) for i in range(m)]
    return Diagram(pinned=pins, free=free, edges=tuple(edges))


def tree_diagram(tree, leaf_positions: Sequence) -> Diagram:
    """Binary-tree diagram: leaves pinned at the given positions, internal
    vertices free, one default kernel per tree edge."""
    if len(leaf_positions) != tree.k:
        raise ValueError("one position per leaf required")
    pins = tuple((f"x{i}", tuple(leaf_positions[i])) for i in range(tree.k))
    free = tuple(f"u{v}" for v in tree.internal_vertices)

    def name(v: int) -> str:
        return f"x{v}" if v < tree.k else f"u{v}"

    edges = tuple((name(a), name(b), None) for a, b in tree.edges())
    return Diagram(pinned=pins, free=free, edges=edges)


@dataclass(frozen=True)
class DiagramValue:
    value: float
    stderr: float
    method: str                      # "exact-sum" | "importance-mc"
    truncation: int
    samples: int = 0
    seed: Optional[int] = None
    work: float = 0.0
    doubling: Optional[dict] = None  # {"truncation": 2L, "value": ...}

    def as_estimate(self) -> MCEstimate:
        return MCEstimate(self.value, self.stderr, max(self.samples, 1), self.seed)


# -- exact evaluation ---------------------------------------------------------


def _resolved_edges(diagram: Diagram, d: int) -> list[tuple[str, str, float]]:
    return [(a, b, float(e) if e is not None else float(2 - d)) for a, b, e in diagram.edges]


def exact_work(diagram: Diagram, d: int, L: int) -> float:
    """Work model for exact summation, including the coordinate reduction."""
    n_free = len(diagram.free)
    if n_free == 0:
        return 1.0
    if n_free == 1:
        pins = diagram.pin_positions
        neighbor_pins = [pins[u] for u, _ in diagram.neighbors(diagram.free[0]) if u in pins]
        return kernel_sum_work(d, L, neighbor_pins)
    return float((2 * L + 1) ** (d * n_free))


def _exact_value(diagram: Diagram, d: int, L: int) -> tuple[float, float]:
    pins = diagram.pin_positions
    for pos in pins.values():
        if pos.shape != (d,):
            raise ValueError("pin dimension must equal d")
    edges = _resolved_edges(diagram, d)

    pin_factor = 1.0
    for a, b, e in edges:
        if a in pins and b in pins:
            pin_factor *= float(bracket(pins[a] - pins[b]) ** e)

    free_names = sorted(diagram.free)
    if not free_names:
        return pin_factor, 1.0

    # place the most pin-anchored vertex last so its sum reduces best
    free_names.sort(key=lambda v: sum(1 for u, _ in diagram.neighbors(v) if u in pins))
    last = free_names[-1]
    outer = free_names[:-1]

    total_work = 0.0

    def reduced_sum(placed: dict[str, np.ndarray]) -> float:
        nonlocal total_work
        anchor = []
        for a, b, e in edges:
            if a == last and b != last:
                other = b
            elif b == last and a != last:
                other = a
            else:
                continue
            pos = pins.get(other)
            if pos is None:
                pos = placed[other]
            anchor.append((pos, e))
        total_work += kernel_sum_work(d, L, [p for p, _ in anchor])
        return kernel_product_sum(d, L, anchor)

    if not outer:
        return pin_factor * reduced_sum({}), total_work

    axis = np.arange(-L, L + 1, dtype=np.int64)
    totals: list[float] = []

    def recurse(i: int, placed: dict[str, np.ndarray], factor: float) -> None:
        if factor == 0.0:
            return
        if i == len(outer):
            totals.append(factor * reduced_sum(placed))
            return
        name = outer[i]
        for point in itertools.product(axis, repeat=d):
            pos = np.array(point, dtype=np.int64)
            step = 1.0
            for a, b, e in edges:
                if a == name:
                    other = b
                elif b == name:
                    other = a
                else:
                    continue
                if other in pins:
                    step *= float(bracket(pos - pins[other]) ** e)
                elif other in placed:
                    step *= float(bracket(pos - placed[other]) ** e)
            placed[name] = pos
            recurse(i + 1, placed, factor * step)
            del placed[name]

    recurse(0, {}, 1.0)
    return pin_factor * math.fsum(totals), total_work


# -- Monte Carlo evaluation ---------------------------------------------------


class _RadialLaw:
    """Discrete isotropic displacement law, point mass ∝ <r>**exponent up to a cap."""

    def __init__(self, d: int, exponent: float, cap: int):
        self.d = d
        self.exponent = exponent
        self.cap = cap
        radii = np.arange(cap + 1, dtype=np.int64)
        counts = linf_shell_count(d, radii).astype(np.float64)
        point_mass = bracket_pow_sq(1.0 + radii.astype(np.float64) ** 2, exponent)
        mass = counts * point_mass
        self.norm = float(mass.sum())
        self.cdf = np.cumsum(mass) / self.norm

    def sample_radii(self, gen: np.random.Generator, n: int) -> np.ndarray:
        return np.searchsorted(self.cdf, gen.random(n)).astype(np.int64)

    def point_density(self, radii: np.ndarray) -> np.ndarray:
        q = 1.0 + radii.astype(np.float64) ** 2
        dens = bracket_pow_sq(q, self.exponent) / self.norm
        return np.where(radii <= self.cap, dens, 0.0)


def _sample_linf_shell(gen: np.random.Generator, radii: np.ndarray, d: int) -> np.ndarray:
    """Uniform lattice point on each sup-norm shell (face method)."""
    n = radii.size
    out = np.zeros((n, d), dtype=np.int64)
    pending = radii > 0
    while pending.any():
        idx = np.flatnonzero(pending)
        r = radii[idx]
        pts = gen.integers(-r[:, None], r[:, None] + 1, size=(idx.size, d))
        axes = gen.integers(0, d, size=idx.size)
        signs = gen.integers(0, 2, size=idx.size) * 2 - 1
        pts[np.arange(idx.size), axes] = signs * r
        multiplicity = np.sum(np.abs(pts) == r[:, None], axis=1)
        accepted = gen.random(idx.size) < 1.0 / multiplicity
        out[idx[accepted]] = pts[accepted]
        pending[idx[accepted]] = False
    return out


@dataclass
class _ProposalPlan:
    order: list[str]
    # per vertex: list of (center source, exponent); source is ("pin", position)
    # or ("free", index into order)
    components: list[list[tuple[str, object, float]]]
    laws: dict[tuple[float, int], _RadialLaw] = field(default_factory=dict)


def _proposal_plan(diagram: Diagram, d: int, L: int) -> _ProposalPlan:
    pins = diagram.pin_positions
    edges = _resolved_edges(diagram, d)
    remaining = sorted(diagram.free)
    order: list[str] = []
    anchored: set[str] = set(pins)

    def anchor_count(v: str) -> int:
        return sum(1 for u, _ in diagram.neighbors(v) if u in anchored)

    while remaining:
        best = max(remaining, key=lambda v: (anchor_count(v), v))
        order.append(best)
        anchored.add(best)
        remaining.remove(best)

    rank = {v: i for i, v in enumerate(order)}
    plan = _ProposalPlan(order=order, components=[])
    max_pin = max((int(np.abs(p).max()) for p in pins.values()), default=0)

    for i, v in enumerate(order):
        comps: list[tuple[str, object, float]] = []
        for a, b, e in edges:
            if a == v and b != v:
                other = b
            elif b == v and a != v:
                other = a
            else:
                continue
            if other in pins:
                comps.append(("pin", pins[other], e))
            elif rank.get(other, len(order)) < i:
                comps.append(("free", rank[other], e))
        # defensive coverage: a matched-exponent component at every pin the
        # vertex is not already tied to, so symmetric integrand mass far from
        # the vertex's own neighbors is still proposed at the right order
        covered = {tuple(ref) for kind, ref, _ in comps if kind == "pin"}
        for pos in pins.values():
            if tuple(pos) not in covered:
                comps.append(("pin", pos, float(2 - d)))
        if not comps:
            comps = [("pin", pos, float(2 - d)) for pos in pins.values()]
        plan.components.append(comps)
        for kind, ref, e in comps:
            cap = (L + max_pin) if kind == "pin" else 2 * L
            plan.laws.setdefault((e, cap), _RadialLaw(d, e, cap))
    return plan


def _mc_chunk(diagram: Diagram, d: int, L: int, plan: _ProposalPlan,
              seed: int, chunk_index: int, n: int) -> Moments:
    gen = stream(seed, chunk_index)
    pins = diagram.pin_positions
    edges = _resolved_edges(diagram, d)
    max_pin = max((int(np.abs(p).max()) for p in pins.values()), default=0)
    box_points = float((2 * L + 1) ** d)

    positions: list[np.ndarray] = []
    density: list[np.ndarray] = []
    for i, v in enumerate(plan.order):
        comps = plan.components[i]
        k = len(comps)
        pick = gen.random(n)
        uniform_mask = pick < UNIFORM_MIX
        comp_idx = np.minimum(((pick - UNIFORM_MIX) / (1.0 - UNIFORM_MIX) * k), k - 1)
        comp_idx = np.where(uniform_mask, -1, comp_idx.astype(np.int64))

        z = np.zeros((n, d), dtype=np.int64)
        n_uniform = int(uniform_mask.sum())
        if n_uniform:
            z[uniform_mask] = gen.integers(-L, L + 1, size=(n_uniform, d))
        for c, (kind, ref, e) in enumerate(comps):
            mask = comp_idx == c
            m = int(mask.sum())
            if not m:
                continue
            cap = (L + max_pin) if kind == "pin" else 2 * L
            law = plan.laws[(e, cap)]
            radii = law.sample_radii(gen, m)
            disp = _sample_linf_shell(gen, radii, d)
            centers = np.broadcast_to(ref, (m, d)) if kind == "pin" else positions[ref][mask]
            z[mask] = centers + disp

        q = np.where(
            np.all(np.abs(z) <= L, axis=1), UNIFORM_MIX / box_points, 0.0
        )
        for kind, ref, e in comps:
            cap = (L + max_pin) if kind == "pin" else 2 * L
            law = plan.laws[(e, cap)]
            centers = ref[None, :] if kind == "pin" else positions[ref]
            radii = np.max(np.abs(z - centers), axis=1)
            q = q + ((1.0 - UNIFORM_MIX) / k) * law.point_density(radii)
        positions.append(z)
        density.append(q)

    in_box = np.ones(n, dtype=bool)
    for z in positions:
        in_box &= np.all(np.abs(z) <= L, axis=1)

    rank = {v: i for i, v in enumerate(plan.order)}

    def locate(name: str) -> np.ndarray:
        if name in pins:
            return pins[name][None, :]
        return positions[rank[name]]

    integrand = np.ones(n)
    for a, b, e in edges:
        delta = locate(a) - locate(b)
        qsq = 1.0 + np.sum((delta * delta).astype(np.float64), axis=-1)
        integrand *= bracket_pow_sq(qsq, e)

    weight = np.prod(np.stack(density), axis=0)
    x = np.where(in_box & (weight > 0), integrand / np.maximum(weight, 1e-300), 0.0)
    return Moments(float(np.sum(x)), float(np.sum(x * x)), n)


def _mc_value(diagram: Diagram, d: int, L: int, samples: int, seed: int,
              workers: int = 1) -> MCEstimate:
    plan = _proposal_plan(diagram, d, L)
    n_chunks = max(1, math.ceil(samples / MC_CHUNK))
    jobs = [(ci, MC_CHUNK) for ci in range(n_chunks)]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            chunks = list(
                pool.map(lambda job: _mc_chunk(diagram, d, L, plan, seed, *job), jobs)
            )
    else:
        chunks = [_mc_chunk(diagram, d, L, plan, seed, ci, cn) for ci, cn in jobs]
    return merge_moments(chunks, seed=seed)


def evaluate_diagram(
    diagram: Diagram,
    d: int,
    L: Optional[int] = None,
    method: str = "auto",
    samples: int = 400_000,
    seed: int = 0,
    workers: int = 1,
    doubling_report: bool = False,
) -> DiagramValue:
    """Value of a diagram over the truncation box ``[-L, L]^d``.

    ``method`` is ``exact-sum``, ``importance-mc`` or ``auto`` (exact when the
    work model stays under ``EXACT_WORK_GUARD``).  The exact path is
    deterministic; the sampling path is deterministic per ``(seed, samples)``
    and worker-count independent.
    """
    if d < 1:
        raise ValueError("d must be positive")
    L = int(L) if L is not None else diagram.default_truncation()
    work = exact_work(diagram, d, L)
    if method == "auto":
        method = "exact-sum" if work <= EXACT_WORK_GUARD else "importance-mc"
    if method == "exact-sum":
        if work > EXACT_WORK_GUARD:
            raise ValueError(
                f"exact work {work:.3g} exceeds the guard {EXACT_WORK_GUARD:.1g}; "
                "use importance-mc"
            )
        value, used = _exact_value(diagram, d, L)
        result = DiagramValue(value, 0.0, "exact-sum", L, work=used)
    elif method == "importance-mc":
        est = _mc_value(diagram, d, L, samples, seed, workers)
        result = DiagramValue(
            est.mean, est.stderr, "importance-mc", L,
            samples=est.samples, seed=seed, work=float(est.samples),
        )
    else:
        raise ValueError(f"unknown method {method!r}")

    if doubling_report:
        doubled = evaluate_diagram(
            diagram, d, 2 * L, method="auto", samples=samples, seed=seed + 1,
            workers=workers, doubling_report=False,
        )
        result = DiagramValue(
            result.value, result.stderr, result.method, result.truncation,
            samples=result.samples, seed=result.seed, work=result.work,
            doubling={"truncation": 2 * L, "value": doubled.value,
                      "stderr": doubled.stderr},
        )
    return result


# -- convolution checks -------------------------------------------------------


@dataclass(frozen=True)
class ConvolutionCheck:
    variant: str
    d: int
    a: float
    b: float
    x: tuple[int, ...]
    y: tuple[int, ...]
    w: Optional[tuple[int, ...]]
    truncation: int
    lhs: float
    rhs: float

    @property
    def ratio(self) -> float:
        return self.lhs / self.rhs


def check_convolution(
    d: int,
    x: Sequence[int],
    y: Sequence[int],
    a: float = 2.0,
    b: float = 2.0,
    L: Optional[int] = None,
    variant: str = "std",
    w: Optional[Sequence[int]] = None,
) -> ConvolutionCheck:
    """Truncated convolution sum against its predicted comparison scale.

    Variants: ``std`` compares ``sum <x-z>^{a-d} <z-y>^{b-d}`` with
    ``<x-y>^{a+b-d}`` (needs a, b > 0, a+b < d); ``log`` is the a = 0 endpoint
    with an extra ``log <x-y>`` on the comparison side; ``triple`` compares a
    three-kernel sum with the cyclic minimum-distance bound.
    """
    xv = np.asarray(x, dtype=np.int64)
    yv = np.asarray(y, dtype=np.int64)
    scale = max(int(np.abs(xv).max()), int(np.abs(yv).max()), 1)
    if w is not None:
        wv = np.asarray(w, dtype=np.int64)
        scale = max(scale, int(np.abs(wv).max()))
    L = int(L) if L is not None else 4 * scale

    if variant == "std":
        if not (a > 0 and b > 0 and a + b < d):
            raise ValueError("std variant needs a, b > 0 and a + b < d")
        lhs = kernel_product_sum(d, L, [(xv, a - d), (yv, b - d)])
        rhs = float(bracket(xv - yv) ** (a + b - d))
        return ConvolutionCheck("std", d, a, b, tuple(xv), tuple(yv), None, L, lhs, rhs)

    if variant == "log":
        if not (0 < b < d):
            raise ValueError("log variant needs 0 < b < d")
        if tuple(xv) == tuple(yv):
            raise ValueError("log variant needs x != y")
        lhs = kernel_product_sum(d, L, [(xv, -float(d)), (yv, b - d)])
        gap = float(bracket(xv - yv))
        rhs = gap ** (b - d) * math.log(gap)
        return ConvolutionCheck("log", d, 0.0, b, tuple(xv), tuple(yv), None, L, lhs, rhs)

    if variant == "triple":
        if w is None:
            raise ValueError("triple variant needs the third point w")
        if d <= 4:
            raise ValueError("triple variant needs d > 4")
        wv = np.asarray(w, dtype=np.int64)
        lhs = kernel_product_sum(
            d, L, [(xv, 2.0 - d), (yv, 2.0 - d), (wv, 2.0 - d)]
        )
        rhs = 0.0
        for center, p1, p2 in ((xv, yv, wv), (yv, wv, xv), (wv, xv, yv)):
            g1 = float(bracket(center - p1))
            g2 = float(bracket(center - p2))
            rhs += min(g1, g2) ** 2 / (g1 ** (d - 2) * g2 ** (d - 2))
        return ConvolutionCheck(
            "triple", d, 2.0, 2.0, tuple(xv), tuple(yv), tuple(wv), L, lhs, rhs
        )

    raise ValueError(f"unknown variant {variant!r}")


# -- structural reductions ----------------------------------------------------


@dataclass(frozen=True)
class CherryContraction:
    """Certificate that a two-leaf junction was contracted.

    The claimed comparison: the original value is bounded by a constant times
    ``scale**scale_exponent`` times the sum of the two sub-diagram values,
    with ``scale_exponent = 4 - d``.
    """

    junction: str
    kept: str
    leaves: tuple[str, str]
    scale_exponent: float
    subdiagrams: tuple[Diagram, Diagram]


def contract_cherry(
    diagram: Diagram, free_vertex: str, d: int, keep: Optional[str] = None
) -> CherryContraction:
    """Contract a free junction whose neighbors include two pinned leaves.

    ``keep`` names the surviving neighbor; when omitted it must be the unique
    neighbor that is not a pinned leaf.
    """
    if free_vertex not in diagram.free:
        raise ValueError(f"{free_vertex!r} is not a free vertex")
    nbrs = diagram.neighbors(free_vertex)
    if len(nbrs) != 3:
        raise ValueError("cherry contraction needs a degree-3 junction")
    pins = dict(diagram.pinned)
    leaf_names = [
        u for u, _ in nbrs if u in pins and diagram.degree(u) == 1
    ]
    if keep is None:
        others = [u for u, _ in nbrs if u not in leaf_names]
        if len(others) != 1:
            raise ValueError("ambiguous junction; pass keep=")
        keep = others[0]
    else:
        if keep not in [u for u, _ in nbrs]:
            raise ValueError(f"keep={keep!r} is not a neighbor of the junction")
    leaves = sorted({u for u in leaf_names if u != keep})
    if len(leaves) != 2:
        raise ValueError("the junction needs exactly two pinned leaf neighbors")

    subs = []
    for kept_leaf in leaves:
        dropped = [free_vertex] + [w for w in leaves if w != kept_leaf]
        new_pinned = tuple((n, p) for n, p in diagram.pinned if n not in dropped)
        new_free = tuple(f for f in diagram.free if f not in dropped)
        new_edges = tuple(
            (a, b, e) for a, b, e in diagram.edges
            if a not in dropped and b not in dropped
        ) + ((keep, kept_leaf, None),)
        subs.append(Diagram(new_pinned, new_free, new_edges))
    return CherryContraction(
        junction=free_vertex,
        kept=keep,
        leaves=(leaves[0], leaves[1]),
        scale_exponent=float(4 - d),
        subdiagrams=(subs[0], subs[1]),
    )


@dataclass(frozen=True)
class TreeReduction:
    """Iterated cherry contraction of a binary-tree diagram down to edges."""

    root: str
    steps: int
    scale_exponent_per_step: float
    total_exponent: float
    residual_leaves: tuple[str, ...]
    trace: tuple[str, ...]


def tree_reduce(diagram: Diagram, root: str, d: int) -> TreeReduction:
    """Reduce a tree diagram with pinned leaves to single root-leaf edges.

    Every contraction step forks the worklist in two and earns one factor of
    ``scale**(4-d)``; a diagram with ``l+1`` pinned leaves reduces in ``l-1``
    steps per branch, ending on edges ``root -- w`` whose leaves are collected.
    """
    pins = dict(diagram.pinned)
    if root not in pins:
        raise ValueError("root must be a pinned leaf")
    n_vertices = len(diagram.pinned) + len(diagram.free)
    if len(diagram.edges) != n_vertices - 1:
        raise ValueError("diagram is not a tree")
    for name in diagram.free:
        if diagram.degree(name) != 3:
            raise ValueError("free internal vertices must have degree 3")
    for name in pins:
        if diagram.degree(name) != 1:
            raise ValueError("pinned vertices must be leaves")

    n_leaves = len(diagram.pinned)  # root plus l other leaves
    expected_steps = n_leaves - 2
    trace: list[str] = []
    residual: set[str] = set()
    worklist = [(diagram, 0)]
    while worklist:
        current, depth = worklist.pop()
        if not current.free:
            (a, b, _), = current.edges
            leaf = b if a == root else a
            residual.add(leaf)
            if depth != expected_steps:
                raise AssertionError("uneven reduction depth in a binary tree")
            continue
        cherry = None
        for v in sorted(current.free):
            nbrs = [u for u, _ in current.neighbors(v)]
            leaf_nbrs = [
                u for u in nbrs
                if u != root and u in dict(current.pinned) and current.degree(u) == 1
            ]
            if len(leaf_nbrs) >= 2:
                keep = [u for u in nbrs if u not in leaf_nbrs[:2]][0]
                cherry = (v, keep)
                break
        if cherry is None:
            raise AssertionError("a pinned-leaf tree always contains a cherry")
        contraction = contract_cherry(current, cherry[0], d, keep=cherry[1])
        trace.append(
            f"contract {cherry[0]} (leaves {contraction.leaves[0]},"
            f" {contraction.leaves[1]}; keep {contraction.kept})"
        )
        for sub in contraction.subdiagrams:
            worklist.append((sub, depth + 1))

    return TreeReduction(
        root=root,
        steps=expected_steps,
        scale_exponent_per_step=float(4 - d),
        total_exponent=float((4 - d) * expected_steps),
        residual_leaves=tuple(sorted(residual)),
        trace=tuple(trace),
    )


# -- one-loop diagram ---------------------------------------------------------


def one_loop(
    w1: Sequence[int],
    w2: Sequence[int],
    d: int,
    n: int,
    L: Optional[int] = None,
    samples: int = 1_500_000,
    seed: int = 0,
    workers: int = 1,
    eps: Optional[float] = None,
) -> DiagramValue:
    """Value of the one-loop diagram at pin separation scale n.

    Symmetric in its pins by construction (pins are canonicalized before
    evaluation).  Uses the exact path when the work guard allows, otherwise
    importance sampling.
    """
    p1, p2 = sorted((tuple(int(c) for c in w1), tuple(int(c) for c in w2)))
    gap = float(np.linalg.norm(np.asarray(p1) - np.asarray(p2)))
    if eps is not None and gap < eps * n:
        raise ValueError(f"pin separation {gap:.3g} is below eps*n = {eps * n:.3g}")
    L = int(L) if L is not None else int(math.ceil(2 * gap))
    if L < 2 * gap:
        raise ValueError("truncation must satisfy L >= 2 |w1 - w2|")
    diagram = one_loop_diagram(p1, p2, d)
    return evaluate_diagram(
        diagram, d, L=L, method="auto", samples=samples, seed=seed, workers=workers
    )


# -- scaling-regime membership and slope fits ---------------------------------


def region_filter(
    points: Sequence[Sequence[float]], eps: float, n: float, kind: str = "G"
) -> bool:
    """Membership test for the far-separation regimes.

    ``G``: every coordinate bounded by ``n / eps`` and every consecutive pair
    of points at Euclidean distance at least ``eps * n`` (both inclusive).
    ``F``: the first point keeps distance at least ``eps * n`` from each of
    the remaining anchor points and has magnitude at most ``n / eps``.
    """
    if eps <= 0 or n <= 0:
        raise ValueError("eps and n must be positive")
    pts = [np.asarray(p, dtype=np.float64) for p in points]
    if kind == "G":
        if len(pts) < 2:
            raise ValueError("G needs at least two points")
        if any(np.abs(p).max() > n / eps for p in pts):
            return False
        return all(
            float(np.linalg.norm(pts[i] - pts[i - 1])) >= eps * n
            for i in range(1, len(pts))
        )
    if kind == "F":
        if len(pts) < 2:
            raise ValueError("F needs an anchor point and at least one reference")
        g = pts[0]
        if float(np.linalg.norm(g)) > n / eps:
            return False
        return all(float(np.linalg.norm(g - q)) >= eps * n for q in pts[1:])
    raise ValueError(f"unknown region kind {kind!r}")


@dataclass(frozen=True)
class ScalingFit:
    slope: float
    intercept: float
    residual_max: float


def fit_scaling(pairs: Sequence[tuple[float, float]]) -> ScalingFit:
    """Least-squares slope of log(value) against log(n)."""
    if len(pairs) < 2:
        raise ValueError("need at least two (n, value) pairs")
    ns = np.array([float(n) for n, _ in pairs])
    vs = np.array([float(v) for _, v in pairs])
    if np.any(ns <= 0) or np.any(vs <= 0):
        raise ValueError("scaling fits need positive n and positive values")
    slope, intercept = np.polyfit(np.log(ns), np.log(vs), 1)
    residuals = np.log(vs) - (slope * np.log(ns) + intercept)
    return ScalingFit(float(slope), float(intercept), float(np.abs(residuals).max()))
