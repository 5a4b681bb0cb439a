"""Monte Carlo estimation on finite boxes.

Frequency estimates of the k-point functions, one-arm conditioned cluster
sampling as a finite-volume stand-in for the incipient-infinite-cluster
measure, truncated estimates of the vertex factor and of the double
connection (bubble) sum, and a scaling probe that tabulates rescaled k-point
estimates along a sequence of dilations.

The conditioned quantities are *proxies*: the infinite-volume objects they
approximate are weak limits under a diverging one-arm conditioning, and no
convergence rate is claimed at desk scale.  Every estimator draws from
counter-based streams keyed by its own coordinates (trial, role, rejection
attempt), so results are bit-reproducible for a fixed seed regardless of
worker count or of which other estimates a session happens to compute first.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .lattice import (
    Configuration,
    Graph,
    box,
    clusters,
    connected_any,
    doubly_connected,
)
from .rng import stream
from .stats import MCEstimate, Moments, merge_moments

LatticePoint = tuple[int, ...]

#: Rejection sampling gives up after this many attempts per sample.
CONDITIONING_ATTEMPT_CAP = 10_000_000

#: The scaling probe refuses boxes with more vertices than this.
PROBE_VERTEX_GUARD = 2_000_000

#: Byte budget for one chunk of sampled open-edge masks.
_CHUNK_BYTES = 1 << 24
_CHUNK_TRIALS_CAP = 4096

# Stream namespaces, so the estimators never share draws under one seed.
_NS_TAU = 101
_NS_COND = 102
_NS_BUBBLE = 103
_NS_RHO = 104


def _as_point(x: Sequence[int]) -> LatticePoint:
    return tuple(int(c) for c in x)


def _chunk_trials(n_edges: int) -> int:
    """Trials per sampling chunk, sized to a fixed byte budget.

    The layout depends only on the graph, never on the worker count, so the
    chunk boundaries (and therefore every draw) are reproducible.
    """
    return max(1, min(_CHUNK_TRIALS_CAP, _CHUNK_BYTES // max(8 * n_edges, 1)))


# -- k-point frequency --------------------------------------------------------


def _gamma_indicator(
    graph: Graph, mask: np.ndarray, source: int, targets: Sequence[int]
) -> bool:
    """Does one configuration connect the source to every target?"""
    need = set(targets)
    need.discard(source)
    if not need:
        return True
    seen = {source}
    stack = [source]
    while stack:
        cur = stack.pop()
        for eid, nbr in graph.adjacency[cur]:
            if not mask[eid] or nbr in seen:
                continue
            seen.add(nbr)
            need.discard(nbr)
            if not need:
                return True
            stack.append(nbr)
    return False


def estimate_tau_k(
    graph: Graph,
    p: float,
    points: Sequence[Sequence[int]],
    trials: int,
    seed: int,
    workers: int = 1,
) -> MCEstimate:
    """Empirical frequency of the all-in-one-cluster event.

    Parameters
    ----------
    graph : Graph
        Finite graph (usually a box) carrying the i.i.d. bond process.
    p : float
        Bond probability in [0, 1].
    points : sequence of lattice points
        The marked vertices; all must belong to the graph.  Repeats are
        allowed and count once.
    trials : int
        Number of independent configurations.
    seed : int
        Master seed; trials are drawn in fixed chunks from per-chunk streams.
    workers : int
        Chunks may be evaluated concurrently; the merge happens in chunk
        order, so the result is identical for any worker count.

    Returns
    -------
    MCEstimate
        Sample frequency with its binomial standard error (zero when every
        trial agrees, infinite when ``trials == 1``).
    """
    if trials < 1:
        raise ValueError("need trials >= 1")
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    pts = [_as_point(x) for x in points]
    if not pts:
        raise ValueError("need at least one marked point")
    for x in pts:
        if x not in graph.index:
            raise ValueError(f"{x} is not a vertex of the graph")
    source = graph.index[pts[0]]
    targets = [graph.index[x] for x in pts[1:]]

    chunk = _chunk_trials(graph.n_edges)
    layout = [
        (index, min(chunk, trials - start))
        for index, start in enumerate(range(0, trials, chunk))
    ]

    def run_chunk(item: tuple[int, int]) -> Moments:
        index, count = item
        gen = stream(seed, _NS_TAU, index)
        masks = gen.random((count, graph.n_edges)) < p
        hits = sum(
            1 for t in range(count)
            if _gamma_indicator(graph, masks[t], source, targets)
        )
        return Moments(float(hits), float(hits), count)

    if workers <= 1:
        parts = [run_chunk(item) for item in layout]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run_chunk, layout))
    return merge_moments(parts, seed=seed)


# -- one-arm conditioned sampling ---------------------------------------------


@dataclass(frozen=True)
class ConditionedSample:
    """One configuration accepted under the one-arm conditioning.

    ``config`` satisfies {center of the box is openly connected to the shell
    at sup-distance ``survival_radius``}; ``attempts`` counts the rejection
    draws spent, so acceptance rates can be reported.
    """

    config: Configuration
    survival_radius: int
    attempts: int


def _shell_around(
    graph: Graph, base: LatticePoint, radius: int
) -> tuple[LatticePoint, ...]:
    return tuple(
        v
        for v in graph.vertices
        if max(abs(a - b) for a, b in zip(v, base)) == radius
    )


def _sample_conditioned(
    graph: Graph,
    p: float,
    source: LatticePoint,
    shell: Sequence[LatticePoint],
    seed: int,
    coords: tuple[int, ...],
    max_attempts: int,
) -> ConditionedSample:
    """Rejection core shared by the public sampler and the vertex factor."""
    for attempt in range(1, max_attempts + 1):
        gen = stream(seed, *coords, attempt)
        mask = gen.random(graph.n_edges) < p
        config = Configuration(graph, mask, p)
        if connected_any(config, source, shell):
            return ConditionedSample(config, 0, attempt)
    raise RuntimeError(
        f"conditioning never met in {max_attempts} attempts "
        f"(acceptance rate below {1.0 / max_attempts:.2e}); "
        "raise the cap, the bond probability, or shrink the radius"
    )


def conditioned_cluster_sample(
    graph: Graph,
    p: float,
    R: int,
    seed: int,
    stream_index: int = 0,
    max_attempts: int = CONDITIONING_ATTEMPT_CAP,
) -> ConditionedSample:
    """Sample a configuration conditioned on a one-arm event, by rejection.

    The conditioning event is {box center openly connected to the shell at
    sup-distance ``R`` from the center}; rejection sampling makes the
    returned law exactly the conditional law on the box.  This is the
    finite-volume proxy used for incipient-infinite-cluster quantities: the
    infinite-volume measure arises from conditioning on any diverging open
    connection, of which the one-arm event is the desk-scale version.  No
    rate of convergence is claimed.

    Raises
    ------
    RuntimeError
        When ``max_attempts`` rejections pass without an acceptance; the
        message reports the implied acceptance-rate bound.
    """
    if graph.box_radius is None:
        raise ValueError("conditioned sampling needs a box graph")
    if not 1 <= R <= graph.box_radius:
        raise ValueError("need 1 <= R <= box radius")
    if not 0.0 < p <= 1.0:
        raise ValueError("p must lie in (0, 1]")
    shell = _shell_around(graph, graph.box_center, R)
    out = _sample_conditioned(
        graph, p, graph.box_center, shell, seed,
        (_NS_COND, stream_index), max_attempts,
    )
    # Postcondition, kept as a hard assertion: the sample satisfies its
    # conditioning event.
    assert connected_any(out.config, graph.box_center, shell)
    return ConditionedSample(out.config, R, out.attempts)


# -- bubble sum ---------------------------------------------------------------


def _double_connection_partners(
    config: Configuration, source: int
) -> set[int]:
    """Vertex indices doubly connected to the source, the source excluded.

    A vertex admits two edge-disjoint open paths from the source exactly
    when both sit in the same two-edge-connected piece of the open subgraph,
    so the set is computed by removing the open bridges (one depth-first
    pass) and reading off the component of the source.
    """
    graph = config.graph
    mask = config.open_mask
    adjacency = graph.adjacency

    disc: dict[int, int] = {source: 0}
    low = {source: 0}
    timer = 1
    bridges: set[int] = set()
    it_stack = [(source, -1, iter(adjacency[source]))]
    while it_stack:
        cur, in_edge, edge_iter = it_stack[-1]
        descended = False
        for eid, nbr in edge_iter:
            if not mask[eid] or eid == in_edge:
                continue
            if nbr not in disc:
                disc[nbr] = low[nbr] = timer
                timer += 1
                it_stack.append((nbr, eid, iter(adjacency[nbr])))
                descended = True
                break
            low[cur] = min(low[cur], disc[nbr])
        if not descended:
            it_stack.pop()
            if it_stack:
                parent = it_stack[-1][0]
                low[parent] = min(low[parent], low[cur])
                if low[cur] > disc[parent]:
                    bridges.add(in_edge)

    out = {source}
    stack = [source]
    while stack:
        cur = stack.pop()
        for eid, nbr in adjacency[cur]:
            if not mask[eid] or eid in bridges or nbr in out:
                continue
            out.add(nbr)
            stack.append(nbr)
    out.discard(source)
    return out


def estimate_bubble(
    graph: Graph,
    p: float,
    R: int,
    trials: int,
    seed: int,
    radius: Optional[int] = None,
    max_attempts: int = CONDITIONING_ATTEMPT_CAP,
    workers: int = 1,
) -> MCEstimate:
    """Truncated double-connection sum under the one-arm proxy measure.

    Estimates the sum over box vertices u of the probability that the box
    center is doubly connected to u, under the conditioned law of
    ``conditioned_cluster_sample``.  The degenerate u = center term (a double
    connection by the empty-witness convention, probability one) is excluded
    from the sum.  With ``radius`` given, only u within that sup-distance of
    the center are counted, which exposes how the tail of the sum dies off
    beyond the cluster scale.

    The per-trial summand is the number of qualifying vertices in the
    two-edge-connected piece of the center, so one bridge-finding pass per
    sample replaces a flow computation per vertex.
    """
    if graph.box_radius is None:
        raise ValueError("bubble estimation needs a box graph")
    if trials < 1:
        raise ValueError("need trials >= 1")
    center = graph.box_center
    center_idx = graph.index[center]
    shell = _shell_around(graph, center, R)
    if not 1 <= R <= graph.box_radius:
        raise ValueError("need 1 <= R <= box radius")
    if not 0.0 < p <= 1.0:
        raise ValueError("p must lie in (0, 1]")

    def run_trial(t: int) -> int:
        sample = _sample_conditioned(
            graph, p, center, shell, seed, (_NS_BUBBLE, t), max_attempts
        )
        partners = _double_connection_partners(sample.config, center_idx)
        if radius is None:
            return len(partners)
        return sum(
            1
            for i in partners
            if max(abs(a - b) for a, b in zip(graph.vertices[i], center))
            <= radius
        )

    indices = range(trials)
    if workers <= 1:
        counts = [run_trial(t) for t in indices]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            counts = list(pool.map(run_trial, indices))
    parts = [Moments(float(c), float(c) ** 2, 1) for c in counts]
    return merge_moments(parts, seed=seed)


# -- vertex factor ------------------------------------------------------------


@dataclass(frozen=True)
class RhoEstimate:
    """Truncated vertex-factor estimate under the one-arm proxy measure.

    ``value`` is the sum over directed lattice edges f with tail inside the
    truncation ball of radius ``truncation_M`` of the triple-product
    probability estimate; ``proxy_R`` records the one-arm conditioning radius
    all three samples used.  The term sum is nonnegative and grows with the
    truncation, so estimates at a fixed seed are monotone in M.
    """

    value: MCEstimate
    truncation_M: int
    proxy_R: int


def _truncation_edges(
    graph: Graph, center: LatticePoint, M: int
) -> list[tuple[LatticePoint, LatticePoint]]:
    """Directed nearest-neighbor edges with tail within M of the center."""
    dim = graph.dim
    tails = sorted(
        v
        for v in graph.vertices
        if max(abs(a - b) for a, b in zip(v, center)) <= M
    )
    out = []
    for tail in tails:
        for axis in range(dim):
            for sign in (1, -1):
                head = (
                    tail[:axis] + (tail[axis] + sign,) + tail[axis + 1:]
                )
                out.append((tail, head))
    return out


def _escapes(
    config: Configuration,
    start: LatticePoint,
    boundary: Sequence[LatticePoint],
    forbidden: frozenset[LatticePoint] | set[LatticePoint],
) -> bool:
    """Open connection from start to the box boundary avoiding a vertex set."""
    graph = config.graph
    allowed = [v for v in graph.vertices if v not in forbidden]
    return connected_any(config, start, boundary, region=allowed)


def estimate_rho_truncated(
    graph: Graph,
    p: float,
    R: int,
    M: int,
    trials: int,
    seed: int,
    max_attempts: int = CONDITIONING_ATTEMPT_CAP,
) -> RhoEstimate:
    """Truncated vertex-factor proxy from three independent conditioned samples.

    For each directed edge f = (tail, head) with tail in the sup-ball of
    radius M around the box center, and each trial, three independent
    one-arm conditioned configurations are drawn, standing in for the three
    independent cluster measures based at the center, at center + e_1, and
    at the head of f.  Each sample is conditioned on an arm from its own
    base point: {base openly connected to the shell at sup-distance R from
    the base}, so the precondition R + M + 1 <= box radius keeps every shell
    inside the box.  The trial contributes one when all three events hold:

    * the center is doubly connected to the tail of f in the first sample;
    * center + e_1 reaches the box boundary in the second sample while
      avoiding the closure of (first sample's center cluster, together with
      the head of f) — the closure being the union of second-sample open
      clusters meeting that set, which is how a cluster of a deterministic
      vertex set is read in a fresh configuration;
    * the head of f reaches the box boundary in the third sample while
      avoiding the first sample's center cluster.

    Escape to infinity is replaced by escape to the box boundary.  The
    per-edge streams are keyed by the edge itself, not by its position in
    the enumeration, so enlarging M only adds terms and the estimate is
    monotone nondecreasing in M at a fixed seed.  All outputs are proxies:
    nothing is claimed about the rate at which they approach their
    infinite-volume counterparts.

    Returns
    -------
    RhoEstimate
        The summed estimate; its standard error combines the per-edge
        standard errors in quadrature (the streams are independent).
    """
    if graph.box_radius is None:
        raise ValueError("vertex-factor estimation needs a box graph")
    if trials < 1:
        raise ValueError("need trials >= 1")
    if not 0.0 < p <= 1.0:
        raise ValueError("p must lie in (0, 1]")
    if M < 0 or 4 * M > graph.box_radius:
        raise ValueError("need 0 <= M <= box radius / 4")
    if R < 1 or R + M + 1 > graph.box_radius:
        raise ValueError("need 1 <= R and R + M + 1 <= box radius")
    center = graph.box_center
    e1 = (center[0] + 1,) + center[1:]
    center_shell = _shell_around(graph, center, R)
    e1_shell = _shell_around(graph, e1, R)
    boundary = graph.boundary_vertices()

    term_means: list[float] = []
    term_vars: list[float] = []
    for tail, head in _truncation_edges(graph, center, M):
        key = (_NS_RHO, *tail, *head)
        head_shell = _shell_around(graph, head, R)
        hits = 0
        for t in range(trials):
            first = _sample_conditioned(
                graph, p, center, center_shell, seed, (*key, 0, t), max_attempts
            )
            if not doubly_connected(first.config, center, tail):
                continue
            w0 = clusters(first.config).cluster_of(center)
            second = _sample_conditioned(
                graph, p, e1, e1_shell, seed, (*key, 1, t), max_attempts
            )
            part2 = clusters(second.config)
            roots = {part2.root[graph.index[w]] for w in w0}
            roots.add(part2.root[graph.index[head]])
            closure = {
                v
                for i, v in enumerate(graph.vertices)
                if part2.root[i] in roots
            }
            if not _escapes(second.config, e1, boundary, closure):
                continue
            third = _sample_conditioned(
                graph, p, head, head_shell, seed, (*key, 2, t), max_attempts
            )
            if _escapes(third.config, head, boundary, w0):
                hits += 1
        term = merge_moments([Moments(float(hits), float(hits), trials)])
        term_means.append(term.mean)
        term_vars.append(term.stderr**2)

    value = MCEstimate(
        mean=math.fsum(term_means),
        stderr=math.sqrt(math.fsum(term_vars)),
        samples=trials,
        seed=seed,
    )
    return RhoEstimate(value=value, truncation_M=M, proxy_R=R)


# -- scaling probe ------------------------------------------------------------


@dataclass(frozen=True)
class ProbeRow:
    """One dilation step of the scaling probe."""

    n: int
    points: tuple[LatticePoint, ...]
    estimate: MCEstimate
    rescaled: float
    rescaled_stderr: float


def scaling_probe(
    k: int,
    y: Sequence[Sequence[float]],
    d: int,
    p: float,
    n_list: Sequence[int],
    trials: int,
    seed: int,
    vertex_guard: int = PROBE_VERTEX_GUARD,
    workers: int = 1,
) -> list[ProbeRow]:
    """Rescaled k-point estimates along a sequence of dilations.

    For each n the marked points are the floors of n times the direction
    vectors, the box radius is twice n times the largest direction norm, and
    the k-point frequency estimate is multiplied by n^((d-4)(k-1)+2), the
    reciprocal of the conjectured decay rate.  This is exploration output:
    no convergence assertion is made at the dimensions a desk can hold.

    Raises
    ------
    ValueError
        When the boxes would exceed ``vertex_guard`` vertices, or on a
        malformed direction list.
    """
    if k < 2:
        raise ValueError("need k >= 2")
    if len(y) != k:
        raise ValueError(f"need exactly {k} direction vectors, got {len(y)}")
    dirs = [tuple(float(c) for c in v) for v in y]
    if any(len(v) != d for v in dirs):
        raise ValueError("every direction vector must have d coordinates")
    if not n_list:
        raise ValueError("need at least one dilation")
    exponent = (d - 4) * (k - 1) + 2
    scale = max(max(abs(c) for c in v) for v in dirs)
    if scale == 0.0:
        raise ValueError("all direction vectors vanish")

    rows: list[ProbeRow] = []
    for n in n_list:
        if n < 1:
            raise ValueError("dilations must be positive")
        radius = max(1, math.ceil(2 * n * scale))
        if (2 * radius + 1) ** d > vertex_guard:
            raise ValueError(
                f"box of radius {radius} in dimension {d} exceeds the "
                f"vertex guard ({vertex_guard})"
            )
        points = [tuple(math.floor(n * c) for c in v) for v in dirs]
        graph = box(d, radius)
        est = estimate_tau_k(graph, p, points, trials, seed, workers=workers)
        factor = float(n) ** exponent
        rows.append(
            ProbeRow(
                n=int(n),
                points=tuple(points),
                estimate=est,
                rescaled=factor * est.mean,
                rescaled_stderr=factor * est.stderr,
            )
        )
    return rows
