"""FastAPI application wrapping the percolab operations.

One POST endpoint per CLI subcommand under ``/v1``, plus a health probe.
Handlers translate request models into core calls and return JSON-able
result payloads; the CLI embeds those payloads into artifacts unchanged.
Error mapping: precondition violations (``ValueError``/``KeyError``) become
400, failed assertions and exhausted attempt caps become 500, and request
shape problems are FastAPI's usual 422.
"""

from __future__ import annotations

import json
import math
from typing import Any, Optional, Sequence

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__
from ..conntree import (
    build_connectivity_tree,
    classify_tree,
    rejection_sample_connected,
)
from ..diagrams import (
    check_convolution,
    cycle_diagram,
    evaluate_diagram,
    fit_scaling,
    one_loop,
    single_edge_diagram,
    star_diagram,
)
from ..estimation import (
    estimate_bubble,
    estimate_rho_truncated,
    estimate_tau_k,
    scaling_probe,
)
from ..integrals import (
    load_limit_inputs,
    predicted_kpoint_constant,
    tree_integral_mc,
)
from ..lattice import (
    Graph,
    box,
    config_to_json,
    graph_from_edge_text,
    sample_configuration,
)
from ..manifest import build_versions
from ..rng import stream
from ..suites import run_suite
from ..trees import AbstractTree, enumerate_trees
from .models import (
    BubbleRequest,
    ConvCheckRequest,
    EstimateOut,
    FitRequest,
    HealthOut,
    IntegralRequest,
    OneLoopRequest,
    PredictRequest,
    ProbeRequest,
    RhoRequest,
    SampleRequest,
    TableOut,
    TauRequest,
    TreesRequest,
    ValRequest,
    VerifyRequest,
)


def _graph_from(dim: Optional[int], radius: Optional[int],
                edges: Optional[str]) -> Graph:
    if edges is not None:
        if dim is not None or radius is not None:
            raise ValueError("give either dim/radius or an edge list, not both")
        return graph_from_edge_text(edges)
    if dim is None or radius is None:
        raise ValueError("a graph needs dim and radius, or an edge list")
    return box(dim, radius)


def _axis(d: int, axis: int, magnitude: int) -> tuple[int, ...]:
    out = [0] * d
    out[axis] = magnitude
    return tuple(out)


def _family_diagram(family: str, n: int, d: int, legs: int):
    if legs < 2:
        raise ValueError("legs must be at least 2")
    directions = [(0, 1), (1, 1), (0, -1), (1, -1)]
    if family == "single-edge":
        return single_edge_diagram("a", _axis(d, 0, 0), "b", _axis(d, 0, n))
    if family == "star":
        if legs > 5:
            raise ValueError("star families go up to 5 legs")
        positions = [_axis(d, 0, 0)] + [
            _axis(d, ax, sign * n) for ax, sign in directions[: legs - 1]
        ]
        return star_diagram(positions)
    if family == "cycle":
        if not 3 <= legs <= 4:
            raise ValueError("cycle families have 3 or 4 legs")
        positions = [_axis(d, ax, sign * n) for ax, sign in directions[:legs]]
        return cycle_diagram(positions)
    raise ValueError(f"unknown diagram family {family!r}")


def _slope_summary(pairs: list[tuple[float, float]],
                   expect: Optional[float], tol: float) -> dict[str, Any]:
    summary: dict[str, Any] = {"slope": None, "intercept": None,
                               "residual_max": None, "verdict": None}
    if len(pairs) >= 2 and all(v > 0 for _, v in pairs):
        fit = fit_scaling(pairs)
        summary.update(slope=fit.slope, intercept=fit.intercept,
                       residual_max=fit.residual_max)
        if expect is not None:
            summary["verdict"] = (
                "ok" if abs(fit.slope - expect) <= tol else "fail"
            )
            summary["expected_slope"] = expect
            summary["slope_tol"] = tol
    return summary


def _conv_pairs(req: ConvCheckRequest) -> list[list[list[int]]]:
    if req.pairs is not None:
        return req.pairs
    if req.scale < 1:
        raise ValueError("scale must be at least 1")
    gen = stream(req.seed, 7001)
    want = 3 if req.variant == "triple" else 2
    out: list[list[list[int]]] = []
    while len(out) < req.n_pairs:
        # points on the first two axes keep the exact sums low-dimensional
        pts = gen.integers(-req.scale, req.scale + 1, size=(want, 2))
        group = [[int(a), int(b)] + [0] * (req.d - 2) for a, b in pts]
        distinct = len({tuple(g) for g in group}) == want
        if distinct and any(any(c != 0 for c in g) for g in group):
            out.append(group)
    return out


def create_app() -> FastAPI:
    app = FastAPI(title="percolab", version=__version__)

    @app.exception_handler(ValueError)
    @app.exception_handler(KeyError)
    def _bad_request(request: Request, exc: Exception) -> JSONResponse:
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.exception_handler(AssertionError)
    @app.exception_handler(RuntimeError)
    def _failed_run(request: Request, exc: Exception) -> JSONResponse:
        kind = type(exc).__name__
        return JSONResponse(
            status_code=500, content={"detail": f"{kind}: {exc}"}
        )

    @app.get("/v1/health", response_model=HealthOut)
    def health() -> HealthOut:
        return HealthOut(status="ok", versions=build_versions())

    @app.post("/v1/sample")
    def sample(req: SampleRequest) -> dict[str, Any]:
        graph = _graph_from(req.dim, req.radius, req.edges)
        marked = [tuple(x) for x in req.marked] if req.marked else None
        if req.emit_trees and not marked:
            raise ValueError("emit_trees requires marked points")
        if marked:
            config, attempts = rejection_sample_connected(
                graph, req.p, marked, seed=req.seed
            )
        else:
            config = sample_configuration(graph, req.p, req.seed)
            attempts = 1
        result: dict[str, Any] = {
            "config": json.loads(config_to_json(config, seed=req.seed)),
            "attempts": attempts,
            "n_open": int(np.count_nonzero(config.open_mask)),
        }
        if req.emit_trees:
            tree = build_connectivity_tree(config, marked)
            label = classify_tree(tree)
            result["tree"] = tree.to_json_dict()
            result["classification"] = {
                "kind": label.kind,
                "reason": label.reason,
                "shape": label.shape.to_newick() if label.shape else None,
            }
        return result

    @app.post("/v1/trees")
    def trees(req: TreesRequest) -> dict[str, Any]:
        shapes = enumerate_trees(req.k)
        if req.emit == "newick":
            emitted: list[Any] = [t.to_newick() for t in shapes]
        else:
            emitted = [t.to_json_dict() for t in shapes]
        return {"k": req.k, "count": len(shapes), "emit": req.emit,
                "trees": emitted}

    @app.post("/v1/val", response_model=TableOut)
    def val(req: ValRequest) -> TableOut:
        rows = []
        pairs = []
        for n in req.n:
            if n < 1:
                raise ValueError("separations must be positive")
            diagram = _family_diagram(req.family, n, req.d, req.legs)
            value = evaluate_diagram(
                diagram, req.d, L=req.L, method=req.method,
                samples=req.samples, seed=req.seed, workers=req.workers,
            )
            rows.append([f"{req.family}-n{n}", n, value.value, value.stderr])
            pairs.append((float(n), value.value))
        summary = _slope_summary(pairs, req.expect_slope, req.slope_tol)
        summary["family"] = req.family
        summary["d"] = req.d
        return TableOut(
            header=["instance", "n", "value", "stderr"],
            rows=rows, summary=summary,
        )

    @app.post("/v1/conv-check", response_model=TableOut)
    def conv_check(req: ConvCheckRequest) -> TableOut:
        rows = []
        ratios = []
        for i, group in enumerate(_conv_pairs(req)):
            if not all(len(g) == req.d for g in group):
                raise ValueError("pair coordinates must have length d")
            w = group[2] if req.variant == "triple" else None
            check = check_convolution(
                req.d, group[0], group[1], a=req.a, b=req.b, L=req.L,
                variant=req.variant, w=w,
            )
            gap = max(
                int(np.abs(np.asarray(group[0]) - np.asarray(group[1])).max()),
                1,
            )
            rows.append([f"pair-{i}", gap, check.ratio, 0.0])
            ratios.append(check.ratio)
        spread = max(ratios) / min(ratios)
        summary = {
            "variant": req.variant, "d": req.d, "a": req.a, "b": req.b,
            "ratio_min": min(ratios), "ratio_max": max(ratios),
            "spread": spread,
            "verdict": "ok" if spread <= req.spread_tol else "fail",
            "spread_tol": req.spread_tol,
        }
        return TableOut(
            header=["instance", "n", "value", "stderr"],
            rows=rows, summary=summary,
        )

    @app.post("/v1/one-loop", response_model=TableOut)
    def one_loop_sweep(req: OneLoopRequest) -> TableOut:
        rows = []
        pairs = []
        for n in req.n:
            if n < 1:
                raise ValueError("separations must be positive")
            sep = req.sep_mult * n
            w1 = _axis(req.d, 0, 0)
            w2 = _axis(req.d, 0, sep)
            value = one_loop(
                w1, w2, req.d, n, L=req.L_mult * sep,
                samples=req.samples, seed=req.seed, workers=req.workers,
            )
            rows.append([f"loop-n{n}", n, value.value, value.stderr])
            pairs.append((float(n), value.value))
        summary = _slope_summary(pairs, req.expect_slope, req.slope_tol)
        summary["d"] = req.d
        summary["sep_mult"] = req.sep_mult
        return TableOut(
            header=["instance", "n", "value", "stderr"],
            rows=rows, summary=summary,
        )

    @app.post("/v1/fit")
    def fit(req: FitRequest) -> dict[str, Any]:
        pairs = [(float(n), float(v)) for n, v in req.pairs]
        out = fit_scaling(pairs)
        return {"slope": out.slope, "intercept": out.intercept,
                "residual_max": out.residual_max, "points": len(pairs)}

    @app.post("/v1/integral", response_model=EstimateOut)
    def integral(req: IntegralRequest) -> EstimateOut:
        tree = AbstractTree.from_newick(req.tree)
        est = tree_integral_mc(
            tree, req.points, req.d, samples=req.samples, seed=req.seed,
            workers=req.workers, r_mix=req.r_mix,
        )
        return EstimateOut(mean=est.mean, stderr=est.stderr,
                           samples=est.samples, seed=est.seed)

    @app.post("/v1/predict")
    def predict(req: PredictRequest) -> dict[str, Any]:
        inputs = load_limit_inputs(req.inputs)
        out = predicted_kpoint_constant(
            req.k, req.y, inputs, samples=req.samples, seed=req.seed,
            workers=req.workers,
        )
        return {
            "value": out.value,
            "stderr": out.stderr,
            "k": out.k,
            "terms": [
                {"tree": newick, "value": value, "stderr": err}
                for newick, value, err in out.terms
            ],
        }

    @app.post("/v1/tau", response_model=EstimateOut)
    def tau(req: TauRequest) -> EstimateOut:
        graph = _graph_from(req.dim, req.radius, req.edges)
        est = estimate_tau_k(
            graph, req.p, [tuple(x) for x in req.points], req.trials,
            req.seed, workers=req.workers,
        )
        return EstimateOut(mean=est.mean, stderr=est.stderr,
                           samples=est.samples, seed=est.seed)

    @app.post("/v1/rho")
    def rho(req: RhoRequest) -> dict[str, Any]:
        graph = box(req.dim, req.radius)
        kwargs: dict[str, Any] = {}
        if req.max_attempts is not None:
            kwargs["max_attempts"] = req.max_attempts
        out = estimate_rho_truncated(
            graph, req.p, req.R, req.M, req.trials, req.seed, **kwargs
        )
        return {
            "label": "proxy",
            "mean": out.value.mean,
            "stderr": out.value.stderr,
            "samples": out.value.samples,
            "seed": out.value.seed,
            "truncation_M": out.truncation_M,
            "proxy_R": out.proxy_R,
        }

    @app.post("/v1/bubble")
    def bubble(req: BubbleRequest) -> dict[str, Any]:
        graph = box(req.dim, req.radius)
        kwargs: dict[str, Any] = {}
        if req.max_attempts is not None:
            kwargs["max_attempts"] = req.max_attempts
        est = estimate_bubble(
            graph, req.p, req.R, req.trials, req.seed,
            radius=req.sup_radius, workers=req.workers, **kwargs,
        )
        return {
            "label": "proxy",
            "mean": est.mean,
            "stderr": est.stderr,
            "samples": est.samples,
            "seed": est.seed,
            "proxy_R": req.R,
            "sup_radius": req.sup_radius,
        }

    @app.post("/v1/probe", response_model=TableOut)
    def probe(req: ProbeRequest) -> TableOut:
        out = scaling_probe(
            req.k, req.y, req.d, req.p, req.n, req.trials, req.seed,
            workers=req.workers,
        )
        rows = []
        for row in out:
            factor = (
                row.rescaled / row.estimate.mean
                if row.estimate.mean > 0
                else float(row.n) ** ((req.d - 4) * (req.k - 1) + 2)
            )
            rows.append([
                f"n{row.n}", row.n, row.estimate.mean, row.estimate.stderr,
                factor, row.rescaled, row.rescaled_stderr,
            ])
        summary = {
            "k": req.k, "d": req.d, "p": req.p, "trials": req.trials,
            "note": "exploration output only; no convergence assertion",
        }
        return TableOut(
            header=["instance", "n", "tau", "tau_stderr", "factor",
                    "rescaled", "rescaled_stderr"],
            rows=rows, summary=summary,
        )

    @app.post("/v1/verify")
    def verify(req: VerifyRequest) -> dict[str, Any]:
        return run_suite(req.suite, **req.params)

    return app


app = create_app()
