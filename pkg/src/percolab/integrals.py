"""Continuum tree integrals and the predicted k-point limit constant.

A leaf-labeled binary tree with k leaf positions defines an integral over the
positions of its k-2 internal vertices of the product of Riesz kernels
``|u_a - u_b|^{2-d}`` along tree edges.  The module estimates these by
importance sampling, cross-checks the three-leaf case against a deterministic
singularity-adapted quadrature, and assembles the limit constant

    sum over trees of  alpha^(#edges) * (2 d beta rho)^(#internal) * integral.

Sampling proposal: each internal vertex draws from an equal-weight mixture of
isotropic densities centered at the leaf positions and at already-sampled
neighbor vertices.  The radial law has point density proportional to
``r^{2-d}`` out to twice the diameter of the leaf set and a Pareto tail
beyond, so the proposal matches the integrand's pole order at every center and
dominates its decay at infinity; importance weights stay bounded.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .kernels import surface_area
from .rng import stream
from .stats import MCEstimate, Moments, merge_moments
from .trees import AbstractTree, enumerate_trees, tree_invariants

MC_CHUNK = 65536


def _as_points(y: Sequence[Sequence[float]]) -> np.ndarray:
    pts = np.asarray(y, dtype=np.float64)
    if pts.ndim != 2:
        raise ValueError("points must be a list of coordinate vectors")
    if not np.all(np.isfinite(pts)):
        raise ValueError("points must be finite")
    return pts


def _check_distinct(pts: np.ndarray) -> float:
    """Return the diameter; reject near-coincident points."""
    diffs = pts[:, None, :] - pts[None, :, :]
    dist = np.sqrt(np.sum(diffs * diffs, axis=-1))
    diameter = float(dist.max())
    k = len(pts)
    off = dist[~np.eye(k, dtype=bool)]
    if diameter == 0.0 or off.min() <= 1e-9 * diameter:
        raise ValueError("points must be pairwise distinct")
    return diameter


class _ContinuumRadial:
    """Isotropic density: point mass ∝ r^{2-d} inside r_mix, Pareto beyond.

    The radial pdf is linear-in-r inside ``r_mix`` (after the r^{d-1} volume
    factor at the matched pole order) and decays like r^{-gamma} outside.
    """

    def __init__(self, d: int, r_mix: float, gamma: Optional[float] = None):
        self.d = d
        self.r_mix = float(r_mix)
        self.gamma = float(gamma) if gamma is not None else float(2 * d - 6)
        if self.gamma <= 1:
            raise ValueError("tail exponent must exceed 1")
        # radial pdf: c*r on [0, r_mix]; c*r_mix*(r/r_mix)^{-gamma} beyond
        inner = self.r_mix ** 2 / 2.0
        tail = self.r_mix ** 2 / (self.gamma - 1.0)
        self.norm = inner + tail
        self.inner_mass = inner / self.norm
        self.sphere = surface_area(d)

    def sample_radii(self, gen: np.random.Generator, n: int) -> np.ndarray:
        u = gen.random(n)
        v = gen.random(n)
        inner = u < self.inner_mass
        r = np.empty(n)
        r[inner] = self.r_mix * np.sqrt(v[inner])
        r[~inner] = self.r_mix * (1.0 - v[~inner]) ** (-1.0 / (self.gamma - 1.0))
        return r

    def point_density(self, r: np.ndarray) -> np.ndarray:
        r = np.maximum(r, 1e-300)
        pdf = np.where(
            r <= self.r_mix,
            r / self.norm,
            (self.r_mix / self.norm) * (r / self.r_mix) ** (-self.gamma),
        )
        return pdf / (self.sphere * r ** (self.d - 1))


def _unit_sphere(gen: np.random.Generator, n: int, d: int) -> np.ndarray:
    g = gen.standard_normal((n, d))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def _sampling_order(tree: AbstractTree) -> list[tuple[int, list[int]]]:
    """Internal vertices, most-anchored first, with their neighbor lists."""
    anchored = set(tree.leaves)
    remaining = list(tree.internal_vertices)
    order = []
    while remaining:
        def score(v: int) -> tuple[int, int]:
            return (sum(1 for u in tree.neighbors[v] if u in anchored), -v)
        best = max(remaining, key=score)
        order.append((best, list(tree.neighbors[best])))
        anchored.add(best)
        remaining.remove(best)
    return order


def _tree_integral_chunk(
    tree: AbstractTree, pts: np.ndarray, d: int, radial: _ContinuumRadial,
    seed: int, chunk_index: int, n: int,
) -> Moments:
    gen = stream(seed, chunk_index)
    k = tree.k
    order = _sampling_order(tree)
    sampled: dict[int, np.ndarray] = {}
    density: list[np.ndarray] = []

    for v, nbrs in order:
        centers = [pts[u] for u in range(k)]
        centers += [sampled[u] for u in nbrs if u in sampled]
        m = len(centers)
        choice = gen.integers(0, m, size=n)
        radii = radial.sample_radii(gen, n)
        dirs = _unit_sphere(gen, n, d)
        base = np.empty((n, d))
        for c, center in enumerate(centers):
            mask = choice == c
            base[mask] = center if center.ndim == 1 else center[mask]
        pos = base + radii[:, None] * dirs

        q = np.zeros(n)
        for center in centers:
            delta = pos - center
            q += radial.point_density(np.linalg.norm(delta, axis=1))
        density.append(q / m)
        sampled[v] = pos

    def locate(v: int) -> np.ndarray:
        return pts[v][None, :] if v < k else sampled[v]

    integrand = np.ones(n)
    for a, b in tree.edges():
        r = np.linalg.norm(locate(a) - locate(b), axis=1)
        integrand *= np.maximum(r, 1e-300) ** (2 - d)

    weight = np.prod(np.stack(density), axis=0)
    x = integrand / weight
    return Moments(float(np.sum(x)), float(np.sum(x * x)), n)


def tree_integral_mc(
    tree: AbstractTree,
    y: Sequence[Sequence[float]],
    d: int,
    samples: int = 400_000,
    seed: int = 0,
    workers: int = 1,
    r_mix: Optional[float] = None,
) -> MCEstimate:
    """Importance-sampled tree integral over the internal vertex positions.

    Deterministic per ``(seed, samples)`` and independent of ``workers``.
    """
    pts = _as_points(y)
    if len(pts) != tree.k:
        raise ValueError("one position per leaf required")
    if pts.shape[1] != d:
        raise ValueError("point dimension must equal d")
    if d < 5:
        raise ValueError("tree integrals need d >= 5")
    if samples <= 0:
        raise ValueError("samples must be positive")
    diameter = _check_distinct(pts)
    radial = _ContinuumRadial(d, r_mix if r_mix is not None else 2.0 * diameter)

    n_chunks = max(1, math.ceil(samples / MC_CHUNK))
    jobs = list(range(n_chunks))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(
                lambda ci: _tree_integral_chunk(tree, pts, d, radial, seed, ci, MC_CHUNK),
                jobs,
            ))
    else:
        chunks = [
            _tree_integral_chunk(tree, pts, d, radial, seed, ci, MC_CHUNK)
            for ci in jobs
        ]
    return merge_moments(chunks, seed=seed)


# -- deterministic three-point quadrature --------------------------------------


def _graded_breaks(lo: float, hi: float, cluster: Sequence[float],
                   h_min: float, growth: float = 1.5) -> np.ndarray:
    """1-d partition of [lo, hi] geometrically refined toward cluster points."""
    breaks = {lo, hi}
    for c in cluster:
        breaks.add(min(max(c, lo), hi))
        h = h_min
        for sign in (-1.0, 1.0):
            x = c
            while lo < x < hi or x == c:
                x = x + sign * h
                if lo < x < hi:
                    breaks.add(x)
                h *= growth
    out = np.array(sorted(breaks))
    keep = [0]
    for i in range(1, len(out)):
        if out[i] - out[keep[-1]] > 1e-12 * max(abs(hi), abs(lo), 1.0):
            keep.append(i)
    return out[keep]


def _gauss_nodes(breaks: np.ndarray, order: int = 4) -> tuple[np.ndarray, np.ndarray]:
    ref_x, ref_w = np.polynomial.legendre.leggauss(order)
    lo = breaks[:-1][:, None]
    hi = breaks[1:][:, None]
    mid = (hi + lo) / 2.0
    half = (hi - lo) / 2.0
    nodes = (mid + half * ref_x[None, :]).ravel()
    weights = (half * ref_w[None, :]).ravel()
    return nodes, weights


@dataclass(frozen=True)
class QuadResult:
    value: float
    error: float
    tail: float
    cutoff: float
    levels: tuple[int, int]


def three_point_quad(
    y1: Sequence[float],
    y2: Sequence[float],
    d: int,
    cutoff: Optional[float] = None,
    levels: tuple[int, int] = (5, 6),
    order: int = 8,
) -> QuadResult:
    """Deterministic value of ``∫ |x|^{2-d} |x-y1|^{2-d} |x-y2|^{2-d} dx``.

    The integral reduces to the plane spanned by ``y1, y2`` plus one
    orthogonal radius (weight ``rho^{d-3}`` times the sphere area of the
    complement).  Three zones: a near ball of fixed radius meshed with
    geometric refinement toward the three pins (two refinement levels give
    the quoted delta); a far annulus out to the cutoff in spherical
    coordinates of the reduced space; and a closed-form tail beyond the
    cutoff from the two leading terms of the sphere-averaged ``1/r``
    expansion of the integrand.  Because the near zone never depends on the
    cutoff, moving the cutoff changes the value only through the far annulus
    and the tail formula, which agree to the order quoted in ``tail``.
    """
    if d < 5:
        raise ValueError("three-point quadrature needs d >= 5")
    a = np.asarray(y1, dtype=np.float64)
    b = np.asarray(y2, dtype=np.float64)
    if a.shape != (d,) or b.shape != (d,):
        raise ValueError("points must have dimension d")
    pts = np.stack([np.zeros(d), a, b])
    diameter = _check_distinct(pts)

    # orthonormal in-plane basis (rank 1 when 0, y1, y2 are collinear)
    e1 = a / np.linalg.norm(a)
    b_perp = b - (b @ e1) * e1
    rank = 2 if np.linalg.norm(b_perp) > 1e-12 * diameter else 1
    if rank == 2:
        e2 = b_perp / np.linalg.norm(b_perp)
        plane = np.stack([e1, e2])
    else:
        plane = e1[None, :]
    pins = pts @ plane.T                       # in-plane pin coordinates
    n_ortho = d - rank                         # orthogonal directions

    R0 = 4.0 * diameter
    R = float(cutoff) if cutoff is not None else max(16.0 * diameter, 16.0)
    if R < R0:
        raise ValueError("cutoff must be at least four pin diameters")
    half = (2.0 - d) / 2.0

    def near_zone(m: int) -> float:
        h_min = diameter * 2.0 ** (-m)
        axes = [
            _gauss_nodes(_graded_breaks(-R0, R0, pins[:, axis], h_min), order)
            for axis in range(rank)
        ]
        rho_nodes, rho_weights = _gauss_nodes(
            _graded_breaks(0.0, R0, [0.0], h_min), order
        )
        sphere = surface_area(n_ortho) if n_ortho > 1 else 2.0
        if rank == 2:
            s, ws = axes[0]
            t, wt = axes[1]
            total = 0.0
            # slab over rho to bound peak memory
            for lo in range(0, rho_nodes.size, 16):
                rho = rho_nodes[lo:lo + 16]
                wr = rho_weights[lo:lo + 16]
                S, T, P = np.meshgrid(s, t, rho, indexing="ij")
                val = np.ones_like(S)
                for pin in pins:
                    rsq = (S - pin[0]) ** 2 + (T - pin[1]) ** 2 + P ** 2
                    val *= rsq ** half
                val *= P ** (n_ortho - 1)
                val *= (S * S + T * T + P * P) <= R0 * R0
                w = ws[:, None, None] * wt[None, :, None] * wr[None, None, :]
                total += float(np.sum(val * w))
            return sphere * total
        s, ws = axes[0]
        S, P = np.meshgrid(s, rho_nodes, indexing="ij")
        val = np.ones_like(S)
        for pin in pins:
            rsq = (S - pin[0]) ** 2 + P ** 2
            val *= rsq ** half
        val *= P ** (n_ortho - 1)
        val *= (S * S + P * P) <= R0 * R0
        w = ws[:, None] * rho_weights[None, :]
        return sphere * float(np.sum(val * w))

    def far_zone(radial_order: int, n_phi: int, n_theta: int) -> float:
        if R <= R0:
            return 0.0
        breaks = [R0]
        while breaks[-1] * 2.0 < R:
            breaks.append(breaks[-1] * 2.0)
        breaks.append(R)
        r_nodes, r_weights = _gauss_nodes(np.array(breaks), radial_order)
        sphere = surface_area(n_ortho) if n_ortho > 1 else 2.0
        if rank == 2:
            phi_nodes, phi_weights = _gauss_nodes(
                np.array([0.0, math.pi / 2.0]), n_phi
            )
            theta = 2.0 * math.pi * np.arange(n_theta) / n_theta
            w_theta = 2.0 * math.pi / n_theta
            Rr, Ph, Th = np.meshgrid(r_nodes, phi_nodes, theta, indexing="ij")
            S = Rr * np.sin(Ph) * np.cos(Th)
            T = Rr * np.sin(Ph) * np.sin(Th)
            P = Rr * np.cos(Ph)
            val = np.ones_like(S)
            for pin in pins:
                rsq = (S - pin[0]) ** 2 + (T - pin[1]) ** 2 + P ** 2
                val *= rsq ** half
            val *= P ** (n_ortho - 1) * Rr ** 2 * np.sin(Ph)
            w = r_weights[:, None, None] * phi_weights[None, :, None] * w_theta
            return sphere * float(np.sum(val * w))
        phi_nodes, phi_weights = _gauss_nodes(np.array([0.0, math.pi]), n_phi)
        Rr, Ph = np.meshgrid(r_nodes, phi_nodes, indexing="ij")
        S = Rr * np.cos(Ph)
        P = Rr * np.sin(Ph)
        val = np.ones_like(S)
        for pin in pins:
            rsq = (S - pin[0]) ** 2 + P ** 2
            val *= rsq ** half
        val *= P ** (n_ortho - 1) * Rr
        w = r_weights[:, None] * phi_weights[None, :]
        return sphere * float(np.sum(val * w))

    near_coarse = near_zone(levels[0])
    near_fine = near_zone(levels[1])
    far_lo = far_zone(6, 16, 32)
    far_hi = far_zone(10, 28, 64)

    # sphere-averaged integrand ~ r^{3(2-d)} (1 + A2 / r^2 + O(r^-4))
    s_exp = d - 2
    norms_sq = float(pins[1] @ pins[1] + pins[2] @ pins[2])
    dot = float(pins[1] @ pins[2])
    a2 = (
        -(s_exp / 2.0) * norms_sq
        + (s_exp * (s_exp + 2) / (2.0 * d)) * norms_sq
        + (s_exp ** 2 / d) * dot
    )
    tail_lead = surface_area(d) * R ** (6 - 2 * d) / (2 * d - 6)
    tail_second = surface_area(d) * a2 * R ** (4 - 2 * d) / (2 * d - 4)
    tail_next = (abs(tail_second) + tail_lead * (2 * diameter / R) ** 2) * (
        2 * diameter / R
    ) ** 2

    value = near_fine + far_hi + tail_lead + tail_second
    error = abs(near_fine - near_coarse) + abs(far_hi - far_lo) + tail_next
    return QuadResult(
        value=value, error=error, tail=tail_lead, cutoff=R, levels=levels,
    )


# -- limit constant assembly ----------------------------------------------------


@dataclass(frozen=True)
class LimitInputs:
    """External inputs to the limit constant; none have in-repo numeric values."""

    alpha: float
    p_c: float
    rho: float
    d: int

    def __post_init__(self):
        if not (self.alpha > 0 and self.rho > 0):
            raise ValueError("alpha and rho must be positive")
        if not (0.0 < self.p_c < 1.0):
            raise ValueError("p_c must lie in (0, 1)")
        if self.d <= 6:
            raise ValueError("requires d > 6")

    @property
    def beta(self) -> float:
        return self.p_c / (1.0 - self.p_c)


def load_limit_inputs(source) -> LimitInputs:
    """Build LimitInputs from a dict, JSON text, or path to a JSON file."""
    if isinstance(source, LimitInputs):
        return source
    if isinstance(source, dict):
        obj = source
    else:
        text = str(source)
        if text.lstrip().startswith("{"):
            obj = json.loads(text)
        else:
            with open(text, encoding="utf-8") as fh:
                obj = json.load(fh)
    missing = [name for name in ("alpha", "p_c", "rho", "d") if name not in obj]
    if missing:
        raise ValueError(f"missing field: {missing[0]}")
    return LimitInputs(
        alpha=float(obj["alpha"]), p_c=float(obj["p_c"]),
        rho=float(obj["rho"]), d=int(obj["d"]),
    )


@dataclass(frozen=True)
class ConstantPrediction:
    value: float
    stderr: float
    k: int
    terms: tuple[tuple[str, float, float], ...]   # (newick, coeff * I, stderr)


def predicted_kpoint_constant(
    k: int,
    y: Sequence[Sequence[float]],
    inputs: LimitInputs,
    samples: int = 400_000,
    seed: int = 0,
    workers: int = 1,
    trees: Optional[Sequence[AbstractTree]] = None,
) -> ConstantPrediction:
    """Predicted limit of the rescaled k-point function at the given profile.

    Per tree the coefficient is ``alpha^(#edges) * (2 d beta rho)^(#internal)``
    with both counts read off the tree; term errors combine in quadrature.
    """
    pts = _as_points(y)
    if len(pts) != k:
        raise ValueError("need one point per leaf")
    tree_list = list(trees) if trees is not None else enumerate_trees(k)
    terms = []
    total = 0.0
    var = 0.0
    for i, tree in enumerate(tree_list):
        inv = tree_invariants(tree)
        coeff = inputs.alpha ** inv["edges"] * (
            2 * inputs.d * inputs.beta * inputs.rho
        ) ** inv["internal"]
        est = tree_integral_mc(
            tree, pts, inputs.d, samples=samples, seed=seed + i, workers=workers
        )
        terms.append((tree.to_newick(), coeff * est.mean, coeff * est.stderr))
        total += coeff * est.mean
        var += (coeff * est.stderr) ** 2
    return ConstantPrediction(
        value=total, stderr=math.sqrt(var), k=k, terms=tuple(terms)
    )
