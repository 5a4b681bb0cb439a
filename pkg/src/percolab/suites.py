"""Preassembled verification suites over the exact oracles.

Each suite bundles hand-built graphs and seeded random batteries into a
JSON-able report: a list of per-instance records plus a single ``passed``
flag.  The CLI ``verify <suite>`` subcommand exposes them; the acceptance
tests run the same batteries.  Suite names: ``switching``, ``bubble-switch``,
``bk``, ``tree-bound``, ``pivotal-order``, ``witness``.
"""

from __future__ import annotations

import itertools
from typing import Any, Callable, Optional, Sequence

import numpy as np

from .conntree import build_connectivity_tree, rejection_sample_connected
from .lattice import Configuration, Graph, box, connected
from .oracle import (
    connection_event,
    indicator_subset_function,
    seeded_subset_function,
    switching_battery,
    verify_bk,
    verify_bubble_switch,
    verify_tree_bound,
    verify_witness_structure,
)
from .pivotals import open_pivotals, open_pivotals_definitional
from .rng import stream
from .trees import enumerate_trees, select_cherry, three_leaf_tree

RESIDUAL_TOL = 1e-12

Point = tuple[int, ...]


# ---------------------------------------------------------------------------
# Hand-built graphs shared by the switching / tree-bound suites
# ---------------------------------------------------------------------------


def two_route_y_graph() -> tuple[Graph, list[Point]]:
    """Ten-edge Y: a doubled trunk into a junction with two marked arms.

    Marked: the trunk end and the two arm tips.  The parallel trunk route
    and the arm chord keep plenty of non-pivotal structure in play.
    """
    a, b, c = (0, 0), (1, 0), (2, 0)
    d, e = (3, 1), (4, 2)
    f, g = (3, -1), (4, -2)
    h = (1, 1)
    graph = Graph(
        [a, b, c, d, e, f, g, h],
        [(a, b), (b, c), (a, h), (h, c), (c, d), (d, e),
         (c, f), (f, g), (d, f), (b, h)],
    )
    return graph, [a, e, g]


def cherry_chain_graph() -> tuple[Graph, list[Point]]:
    """Ten-edge four-marked chain: two junctions, the second a cherry.

    Marked: chain start, the early side branch, and the two cherry tips;
    a parallel route between the junctions and a tip chord add cycles.
    """
    x0, a, j1, x1 = (0, 0), (1, 0), (2, 0), (2, 2)
    b, j2, x2, x3 = (3, 0), (4, 0), (5, 1), (5, -1)
    c = (3, 1)
    graph = Graph(
        [x0, a, j1, x1, b, j2, x2, x3, c],
        [(x0, a), (a, j1), (j1, x1), (j1, b), (b, j2), (j2, x2),
         (j2, x3), (j1, c), (c, j2), (x2, x3)],
    )
    return graph, [x0, x1, x2, x3]


def theta_cherry_graph() -> tuple[Graph, list[Point]]:
    """Twelve-edge theta: two rungs between parallel trunk routes, then a cherry.

    Marked: the trunk end and the two cherry tips.
    """
    x0, j = (0, 0), (3, 0)
    u1, u2 = (1, 1), (2, 1)
    l1, l2 = (1, -1), (2, -1)
    c1, x1 = (3, 1), (4, 2)
    c2, x2 = (3, -1), (4, -2)
    graph = Graph(
        [x0, u1, u2, l1, l2, j, c1, x1, c2, x2],
        [(x0, u1), (u1, u2), (u2, j), (x0, l1), (l1, l2), (l2, j),
         (u1, l1), (j, c1), (c1, x1), (j, c2), (c2, x2), (c1, c2)],
    )
    return graph, [x0, x1, x2]


def _four_leaf_cherry_tree():
    trees = [
        t for t in enumerate_trees(4) if set(select_cherry(t)[:2]) == {2, 3}
    ]
    return trees[0]


SWITCHING_CASES: dict[str, Callable[[], tuple[Graph, list[Point], Any]]] = {
    "two-route-y": lambda: (*two_route_y_graph(), three_leaf_tree()),
    "cherry-chain": lambda: (*cherry_chain_graph(), _four_leaf_cherry_tree()),
    "theta-cherry": lambda: (*theta_cherry_graph(), three_leaf_tree()),
}


# ---------------------------------------------------------------------------
# Suites
# ---------------------------------------------------------------------------


def switching_suite(
    p_values: Sequence[float] = (0.3, 0.5, 0.7),
) -> dict[str, Any]:
    """Exact cherry-switching identity over every directed edge of each case."""
    instances: list[dict[str, Any]] = []
    passed = True
    for name, make in SWITCHING_CASES.items():
        graph, marked, tree = make()
        checks = switching_battery(graph, marked, tree, list(p_values))
        nonvacuous = sum(1 for c in checks if not c.vacuous)
        # an all-vacuous battery would verify nothing
        if nonvacuous == 0:
            passed = False
        for c in checks:
            ok = c.residual < RESIDUAL_TOL
            passed = passed and ok
            instances.append(
                {
                    "case": name,
                    "p": c.p,
                    "g": [list(c.g[0]), list(c.g[1])],
                    "lhs": c.lhs,
                    "rhs": c.rhs,
                    "residual": c.residual,
                    "vacuous": c.vacuous,
                    "ok": ok,
                }
            )
    return {
        "suite": "switching",
        "passed": passed,
        "n_instances": len(instances),
        "instances": instances,
    }


def bubble_switch_graph() -> tuple[Graph, tuple[Point, Point], Point, Point]:
    """Eight-edge graph for the weighted first-pivotal identity.

    A doubled route from the origin to the pivotal tail D, the candidate
    pivotal edge f = (D, F), a decoy arm to x1 and the target x2 beyond F.
    Returns (graph, f, x1, x2); the box B(2) holds {o, A, B, C, D}.
    """
    o, a, b, c, d = (0, 0), (1, 0), (0, 1), (1, 1), (2, 0)
    x1, f, x2 = (3, 1), (3, 0), (4, 0)
    graph = Graph(
        [o, a, b, c, d, x1, f, x2],
        [(o, a), (a, d), (o, b), (b, c), (c, d), (d, x1), (d, f), (f, x2)],
    )
    return graph, (d, f), x1, x2


def bubble_switch_suite(
    p_values: Sequence[float] = (0.3, 0.5, 0.7),
    g_seeds: Sequence[int] = (0, 1, 2, 3, 4),
) -> dict[str, Any]:
    """Weighted switching with constant, indicator, and seeded weight functions."""
    graph, f, x1, x2 = bubble_switch_graph()
    box_subset = [(0, 0), (1, 0), (0, 1), (1, 1), (2, 0)]
    weightings: list[tuple[str, Optional[Callable[[frozenset], float]]]] = [
        ("const", None),
        ("indicator", indicator_subset_function(box_subset)),
    ]
    weightings.extend(
        (f"seeded-{s}", seeded_subset_function(s)) for s in g_seeds
    )
    instances = []
    passed = True
    for name, G in weightings:
        nonvacuous = 0
        for p in p_values:
            r = verify_bubble_switch(graph, p, f, 1, x1, x2, G)
            ok = r.residual < RESIDUAL_TOL
            passed = passed and ok
            nonvacuous += 0 if r.vacuous else 1
            instances.append(
                {
                    "weighting": name,
                    "p": p,
                    "lhs": r.lhs,
                    "rhs": r.rhs,
                    "residual": r.residual,
                    "vacuous": r.vacuous,
                    "ok": ok,
                }
            )
        if nonvacuous == 0:
            passed = False
    return {
        "suite": "bubble-switch",
        "passed": passed,
        "n_instances": len(instances),
        "instances": instances,
    }


def bk_suite(instances: int = 200, seed: int = 123) -> dict[str, Any]:
    """Disjoint-occurrence inequality on random graphs, plus two controls.

    Random instances: graphs on 4-6 path-labeled vertices with 3-12 edges,
    random connection events A, B, three p values each.  Controls: equality
    on vertex-disjoint events and lhs = 0 for A = B on a single edge.
    """
    gen = stream(seed, 0)
    records: list[dict[str, Any]] = []
    passed = True
    guard = 0
    while len(records) < instances and guard < 100 * max(instances, 1):
        guard += 1
        n = int(gen.integers(4, 7))
        pts = [(i,) for i in range(n)]
        pairs = list(itertools.combinations(range(n), 2))
        keep = gen.random(len(pairs)) < 0.6
        edges = [(pts[i], pts[j]) for (i, j), k in zip(pairs, keep) if k]
        a, b, c, d = (int(v) for v in gen.choice(n, size=4, replace=True))
        if not 3 <= len(edges) <= 12:
            continue
        graph = Graph(pts, edges)
        A = connection_event(pts[a], pts[b])
        B = connection_event(pts[c], pts[d])
        for p in (0.3, 0.5, 0.7):
            if len(records) >= instances:
                break
            lhs, rhs = verify_bk(graph, p, A, B)
            ok = lhs <= rhs + RESIDUAL_TOL
            passed = passed and ok
            records.append(
                {
                    "kind": "random",
                    "edges": len(edges),
                    "p": p,
                    "A": [a, b],
                    "B": [c, d],
                    "lhs": lhs,
                    "rhs": rhs,
                    "ok": ok,
                }
            )

    disjoint = Graph(
        [(0,), (1,), (10,), (11,)], [((0,), (1,)), ((10,), (11,))]
    )
    lhs, rhs = verify_bk(
        disjoint, 0.3, connection_event((0,), (1,)), connection_event((10,), (11,))
    )
    ok = abs(lhs - rhs) < RESIDUAL_TOL
    passed = passed and ok
    records.append(
        {"kind": "vertex-disjoint-control", "p": 0.3, "lhs": lhs, "rhs": rhs,
         "ok": ok}
    )

    single = Graph([(0,), (1,)], [((0,), (1,))])
    ev = connection_event((0,), (1,))
    lhs, rhs = verify_bk(single, 0.5, ev, ev)
    # one edge cannot host two edge-disjoint open connections
    ok = lhs == 0.0
    passed = passed and ok
    records.append(
        {"kind": "shared-edge-control", "p": 0.5, "lhs": lhs, "rhs": rhs,
         "ok": ok}
    )
    return {
        "suite": "bk",
        "passed": passed,
        "n_instances": len(records),
        "instances": records,
    }


def _tree_bound_cases() -> list[tuple[str, Graph, list[Point]]]:
    z0, z1, z2 = (0, 0), (1, 0), (0, 1)
    legs = {"x0": (-1, 0), "x1": (2, 0), "x2": (0, 2)}
    triangle = Graph(
        [z0, z1, z2, *legs.values()],
        [(z0, z1), (z1, z2), (z0, z2),
         (legs["x0"], z0), (legs["x1"], z1), (legs["x2"], z2)],
    )
    path_pts = [(i,) for i in range(6)]
    path = Graph(path_pts, list(zip(path_pts, path_pts[1:])))
    y_graph, y_marked = two_route_y_graph()
    theta, theta_marked = theta_cherry_graph()
    return [
        ("triangle-legs", triangle, list(legs.values())),
        ("box-corners", box(2, 1), [(-1, -1), (1, -1), (1, 1)]),
        ("two-route-y", y_graph, y_marked),
        ("theta-cherry", theta, theta_marked),
        ("path", path, [path_pts[0], path_pts[2], path_pts[5]]),
    ]


def tree_bound_suite(
    p_values: Sequence[float] = (0.2, 0.35, 0.5, 0.65),
) -> dict[str, Any]:
    """tau_k against the binary-tree bound, exactly, on five graphs.

    Includes one four-point instance on the 3x3 box; `verify_tree_bound`
    asserts the inequality internally, so a violation surfaces as a failed
    instance here rather than an exception.
    """
    instances = []
    passed = True
    cases: list[tuple[str, Graph, list[Point], float]] = [
        (name, graph, marked, p)
        for name, graph, marked in _tree_bound_cases()
        for p in p_values
    ]
    cases.append(
        ("box-four-corners", box(2, 1), [(-1, -1), (1, -1), (-1, 1), (1, 1)], 0.4)
    )
    for name, graph, marked, p in cases:
        try:
            tau, bound = verify_tree_bound(graph, p, marked)
            ok = True
        except AssertionError:  # pragma: no cover - would falsify the bound
            tau, bound, ok = float("nan"), float("nan"), False
        passed = passed and ok
        instances.append(
            {"case": name, "k": len(marked), "p": p, "tau": tau,
             "bound": bound, "ok": ok}
        )
    return {
        "suite": "tree-bound",
        "passed": passed,
        "n_instances": len(instances),
        "instances": instances,
    }


def _pivotal_order_consistent(config: Configuration, u, v, edges) -> bool:
    """Closing the i-th pivotal must split earlier edges to u, later to v."""
    graph = config.graph
    mask = np.array(config.open_mask)
    for i, (tail, head) in enumerate(edges):
        eid = graph.edge_index(tail, head)
        mask[eid] = False
        cut = Configuration(graph, mask, config.p)
        mask[eid] = True
        if not (connected(cut, u, tail) and connected(cut, head, v)):
            return False
        for j, (tail_j, head_j) in enumerate(edges):
            if j == i:
                continue
            anchor, target = (u, head_j) if j < i else (v, tail_j)
            if not connected(cut, anchor, target):
                return False
    return True


def pivotal_order_suite(
    random_configs: int = 1000, seed: int = 2024
) -> dict[str, Any]:
    """Fast pivotal extraction against the close-and-test oracle.

    Part one enumerates every configuration of the 3x3 box (12 edges) for
    one corner pair.  Part two draws random configurations of the 5x5 box
    and checks two corner pairs each.  Both parts also check the realized
    order: cutting the i-th pivotal leaves earlier pivotals on the source
    side and later ones on the target side.
    """
    records = []
    passed = True

    graph = box(2, 1)
    u, v = (-1, -1), (1, 1)
    m = graph.n_edges
    edge_bits = np.arange(m, dtype=np.uint32)
    n_checked = mismatches = order_failures = 0
    for bits in range(1 << m):
        mask = (bits >> edge_bits) & 1 == 1
        config = Configuration(graph, mask, 0.5)
        if not connected(config, u, v):
            continue
        n_checked += 1
        fast = open_pivotals(config, u, v)
        slow = open_pivotals_definitional(config, u, v)
        if fast.edges != slow.edges:
            mismatches += 1
        elif not _pivotal_order_consistent(config, u, v, fast.edges):
            order_failures += 1
    ok = mismatches == 0 and order_failures == 0
    passed = passed and ok
    records.append(
        {
            "part": "exhaustive-box-1",
            "configs": n_checked,
            "mismatches": mismatches,
            "order_failures": order_failures,
            "ok": ok,
        }
    )

    graph = box(2, 2)
    pairs = [((-2, -2), (2, 2)), ((-2, 2), (2, -2))]
    n_checked = mismatches = order_failures = 0
    from .lattice import sample_configuration

    for i in range(random_configs):
        config = sample_configuration(graph, 0.55, seed, i)
        for u, v in pairs:
            if not connected(config, u, v):
                continue
            n_checked += 1
            fast = open_pivotals(config, u, v)
            slow = open_pivotals_definitional(config, u, v)
            if fast.edges != slow.edges:
                mismatches += 1
            elif not _pivotal_order_consistent(config, u, v, fast.edges):
                order_failures += 1
    ok = mismatches == 0 and order_failures == 0
    passed = passed and ok
    records.append(
        {
            "part": "random-box-2",
            "configs": n_checked,
            "mismatches": mismatches,
            "order_failures": order_failures,
            "ok": ok,
        }
    )
    return {
        "suite": "pivotal-order",
        "passed": passed,
        "n_instances": len(records),
        "instances": records,
    }


def _witness_hand_cases() -> list[tuple[str, Graph, list[Point], Point]]:
    hub, r1, x0 = (0, 0), (-1, 0), (-2, 0)
    a1, y1 = (1, 1), (2, 2)
    a2, y2 = (1, 0), (2, 0)
    a3, y3 = (1, -1), (2, -2)
    alt = (0, 1)
    three_branch = Graph(
        [hub, r1, x0, a1, y1, a2, y2, a3, y3, alt],
        [(x0, r1), (r1, hub), (hub, a1), (a1, y1), (hub, a2), (a2, y2),
         (hub, a3), (a3, y3), (hub, alt), (alt, a1), (a1, a2), (a2, a3),
         (r1, alt), (y2, a3)],
    )
    yv, l1 = (0, 0), (-1, 0)
    u1, t1, u2, t2 = (1, 1), (2, 2), (1, -1), (2, -2)
    plain_y = Graph(
        [yv, l1, (-2, 0), u1, t1, u2, t2],
        [((-2, 0), l1), (l1, yv), (yv, u1), (u1, t1), (yv, u2), (u2, t2)],
    )
    # the three-branch hub loses pivotality to its alternative routes, so
    # the junction the tree realizes sits one step earlier, at r1
    return [
        ("three-branch-hub", three_branch, [x0, y1, y2, y3], r1),
        ("plain-y", plain_y, [(-2, 0), t1, t2], yv),
    ]


def witness_suite(
    samples_k3: int = 300, samples_k4: int = 200
) -> dict[str, Any]:
    """Structure witnesses at connectivity-tree junctions.

    Two fully open hand-built graphs pin the intended junction; the random
    batteries rejection-sample conditioned configurations on the 5x5 box
    and verify every junction of every realized tree.
    """
    records = []
    passed = True
    for name, graph, marked, junction in _witness_hand_cases():
        config = Configuration(graph, np.ones(graph.n_edges, dtype=bool), 1.0)
        tree = build_connectivity_tree(config, marked)
        report = verify_witness_structure(config, tree, junction)
        ok = report.ok and len(tree.children_map()[junction]) >= 2
        passed = passed and ok
        records.append(
            {
                "part": name,
                "junction": list(junction),
                "children": len(tree.children_map()[junction]),
                "cycles": len(report.cycles),
                "failures": list(report.failures),
                "ok": ok,
            }
        )

    graph = box(2, 2)
    batteries = [
        ("random-k3", [(-2, -2), (2, 2), (2, -2)], samples_k3, 0),
        ("random-k4", [(-2, -2), (2, 2), (2, -2), (-2, 2)], samples_k4, 10_000),
    ]
    for name, marked, n_samples, seed_base in batteries:
        n_junctions = n_wide = n_failed = 0
        for s in range(n_samples):
            config, _ = rejection_sample_connected(
                graph, 0.55, marked, seed=seed_base + s
            )
            tree = build_connectivity_tree(config, marked)
            children = tree.children_map()
            for vert in tree.points:
                if len(children[vert]) < 2:
                    continue
                n_junctions += 1
                if len(children[vert]) >= 3:
                    n_wide += 1
                report = verify_witness_structure(config, tree, vert)
                if not report.ok:
                    n_failed += 1
        ok = n_failed == 0 and n_junctions > 0
        passed = passed and ok
        records.append(
            {
                "part": name,
                "junctions": n_junctions,
                "three_plus_children": n_wide,
                "failed": n_failed,
                "ok": ok,
            }
        )
    return {
        "suite": "witness",
        "passed": passed,
        "n_instances": len(records),
        "instances": records,
    }


SUITES: dict[str, Callable[..., dict[str, Any]]] = {
    "switching": switching_suite,
    "bubble-switch": bubble_switch_suite,
    "bk": bk_suite,
    "tree-bound": tree_bound_suite,
    "pivotal-order": pivotal_order_suite,
    "witness": witness_suite,
}


def run_suite(name: str, **params: Any) -> dict[str, Any]:
    if name not in SUITES:
        known = ", ".join(sorted(SUITES))
        raise ValueError(f"unknown suite {name!r}; choose one of: {known}")
    return SUITES[name](**params)
