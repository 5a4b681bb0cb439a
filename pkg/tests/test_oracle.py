"""Exact enumeration oracle: event language, identities, and inequalities.

Hand values in this file were computed by direct case counting on graphs
small enough to do on paper (a triangle, a square, a two-route Y).
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from percolab.estimation import estimate_tau_k
from percolab.lattice import Configuration, Graph, box
from percolab.oracle import (
    and_event,
    connection_event,
    constant_subset_function,
    disjoint_event,
    double_connection_event,
    evaluate_event,
    exact_event_probability,
    exact_event_probability_recheck,
    gamma_event,
    indicator_subset_function,
    no_common_pivotal_event,
    not_event,
    off_cluster_event,
    pivotal_equals_event,
    seeded_subset_function,
    switching_battery,
    tree_equals_event,
    verify_bk,
    verify_bubble_switch,
    verify_switching,
    verify_tree_bound,
    verify_witness_structure,
)
from percolab.trees import enumerate_trees, three_leaf_tree
from percolab.suites import (
    bubble_switch_graph,
    theta_cherry_graph,
    two_route_y_graph,
)


def _triangle():
    return Graph(
        [(0, 0), (1, 0), (0, 1)],
        [((0, 0), (1, 0)), ((1, 0), (0, 1)), ((0, 1), (0, 0))],
    )


def _square():
    pts = [(0, 0), (1, 0), (1, 1), (0, 1)]
    return Graph(pts, list(zip(pts, pts[1:])) + [(pts[-1], pts[0])])


def _config(graph, open_pairs):
    mask = np.zeros(graph.n_edges, dtype=bool)
    for u, v in open_pairs:
        mask[graph.edge_index(u, v)] = True
    return Configuration(graph, mask, 0.5)


# -- event language -----------------------------------------------------------


def test_event_kind_and_depth_guards():
    with pytest.raises(ValueError):
        from percolab.oracle import EventSpec

        EventSpec("mystery")
    a = connection_event((0, 0), (1, 0))
    nested = and_event(not_event(a), a)  # depth 3
    assert nested.depth() == 3
    with pytest.raises(ValueError):
        and_event(nested, a)  # depth 4


def test_composite_argument_guards():
    a = connection_event((0, 0), (1, 0))
    with pytest.raises(ValueError):
        not_event(a).parts[0] and and_event()  # and with no parts
    with pytest.raises(ValueError):
        disjoint_event(a, gamma_event([(0, 0), (1, 0)]))
    with pytest.raises(ValueError):
        tree_equals_event([(0, 0), (1, 0)], three_leaf_tree())


def test_event_semantics_on_hand_configurations():
    g = _square()
    ring = _config(
        g, [((0, 0), (1, 0)), ((1, 0), (1, 1)), ((1, 1), (0, 1)), ((0, 1), (0, 0))]
    )
    assert evaluate_event(ring, gamma_event([(0, 0), (1, 1), (0, 1)]))
    assert evaluate_event(ring, double_connection_event((0, 0), (1, 1)))
    assert evaluate_event(ring, no_common_pivotal_event((0, 0), [(1, 1)]))

    elbow = _config(g, [((0, 0), (1, 0)), ((1, 0), (1, 1))])
    assert not evaluate_event(elbow, double_connection_event((0, 0), (1, 1)))
    assert evaluate_event(
        elbow,
        pivotal_equals_event((0, 0), [(1, 1)], (((1, 0), (1, 1))), which="last"),
    )
    assert evaluate_event(
        elbow,
        pivotal_equals_event((0, 0), [(1, 1)], (((0, 0), (1, 0))), which="first"),
    )
    assert not evaluate_event(
        elbow,
        pivotal_equals_event((0, 0), [(1, 1)], (((0, 0), (1, 0))), which="last"),
    )
    # region restriction: the connection must stay inside the region
    assert not evaluate_event(
        elbow, connection_event((0, 0), (1, 1), region=[(0, 0), (0, 1), (1, 1)])
    )


def test_off_cluster_event_avoids_the_whole_cluster():
    pts = [(i,) for i in range(5)]
    g = Graph(pts, list(zip(pts, pts[1:])))
    # open: 0-1 (cluster of the avoid point), 2-3-4 (the path to test)
    config = _config(g, [((0,), (1,)), ((2,), (3,)), ((3,), (4,))])
    assert evaluate_event(config, off_cluster_event((2,), (4,), (0,)))
    # now join the path to the avoided cluster
    config2 = _config(g, [((0,), (1,)), ((1,), (2,)), ((2,), (3,)), ((3,), (4,))])
    assert not evaluate_event(config2, off_cluster_event((2,), (4,), (0,)))


def test_tree_equals_event_matches_classification():
    g, marked = two_route_y_graph()
    pts = {v: v for v in g.vertices}
    open_pairs = [
        ((0, 0), (1, 0)),
        ((1, 0), (2, 0)),
        ((2, 0), (3, 1)),
        ((3, 1), (4, 2)),
        ((2, 0), (3, -1)),
        ((3, -1), (4, -2)),
    ]
    config = _config(g, open_pairs)
    assert evaluate_event(config, tree_equals_event(marked, three_leaf_tree()))
    # same tree event fails when one arm is cut
    config2 = _config(g, open_pairs[:-1])
    assert not evaluate_event(config2, tree_equals_event(marked, three_leaf_tree()))


# -- exact probabilities ------------------------------------------------------


def test_exact_single_edge_is_p():
    g = Graph([(0,), (1,)], [((0,), (1,))])
    for p in (0.0, 0.25, 0.7, 1.0):
        assert exact_event_probability(
            g, p, connection_event((0,), (1,))
        ) == pytest.approx(p, abs=1e-15)


def test_exact_triangle_hand_values():
    tri = _triangle()
    p = 0.4
    two_point = exact_event_probability(tri, p, connection_event((0, 0), (1, 0)))
    assert two_point == pytest.approx(p + (1 - p) * p**2, abs=1e-12)
    three_point = exact_event_probability(
        tri, p, gamma_event([(0, 0), (1, 0), (0, 1)])
    )
    assert three_point == pytest.approx(3 * p**2 * (1 - p) + p**3, abs=1e-12)


def test_exact_negation_and_conjunction():
    tri = _triangle()
    p = 0.35
    a = connection_event((0, 0), (1, 0))
    assert exact_event_probability(tri, p, not_event(a)) == pytest.approx(
        1.0 - exact_event_probability(tri, p, a), abs=1e-12
    )
    both = exact_event_probability(tri, p, and_event(a, not_event(a)))
    assert both == 0.0


def test_exact_worker_count_independence():
    g = box(2, 1)
    event = gamma_event([(-1, -1), (1, 1), (-1, 1)])
    lone = exact_event_probability(g, 0.45, event)
    multi = exact_event_probability(g, 0.45, event, workers=3)
    assert multi == pytest.approx(lone, abs=1e-14)


def test_exact_guards():
    g = box(2, 2)  # 40 edges
    with pytest.raises(ValueError):
        exact_event_probability(g, 0.5, connection_event((0, 0), (1, 1)))
    tri = _triangle()
    with pytest.raises(ValueError):
        exact_event_probability(tri, 1.5, connection_event((0, 0), (1, 0)))
    with pytest.raises(ValueError):
        exact_event_probability(tri, 0.5, connection_event((0, 0), (9, 9)))


def test_recheck_agrees_with_the_fast_enumeration():
    tri = _triangle()
    event = and_event(
        gamma_event([(0, 0), (1, 0), (0, 1)]),
        not_event(double_connection_event((0, 0), (1, 0))),
    )
    for p in (0.3, 0.5, 0.8):
        fast = exact_event_probability(tri, p, event)
        slow = exact_event_probability_recheck(tri, p, event)
        assert fast == pytest.approx(slow, abs=1e-14)


def test_monte_carlo_agrees_with_exact_within_four_sigma():
    """Sampled frequencies against enumerated values at one million trials."""
    instances = [
        (_square(), 0.6, [(0, 0), (1, 1)]),
        (box(2, 1), 0.5, [(-1, -1), (1, 1)]),
        (_triangle(), 0.4, [(0, 0), (1, 0), (0, 1)]),
    ]
    for graph, p, points in instances:
        exact = exact_event_probability(graph, p, gamma_event(points))
        est = estimate_tau_k(graph, p, points, trials=1_000_000, seed=17)
        assert abs(est.mean - exact) <= 4.0 * est.stderr, (points, est, exact)


# -- switching identities -----------------------------------------------------


def test_switching_instance_hand_value():
    g, marked = two_route_y_graph()
    check = verify_switching(g, 0.5, marked, three_leaf_tree(), ((0, 0), (1, 0)))
    assert not check.vacuous
    assert check.lhs == pytest.approx(1.0 / 512.0, abs=1e-15)
    assert check.residual < 1e-15


def test_switching_cherry_head_is_vacuous():
    g, marked = two_route_y_graph()
    check = verify_switching(g, 0.5, marked, three_leaf_tree(), ((3, 1), (4, 2)))
    assert check.vacuous
    assert check.lhs == 0.0 and check.rhs == 0.0


def test_switching_battery_matches_single_checks():
    g, marked = theta_cherry_graph()
    tree = three_leaf_tree()
    edges = [((0, 0), (1, 1)), ((3, 0), (3, 1)), ((1, 1), (1, -1))]
    battery = switching_battery(g, marked, tree, [0.4, 0.6], directed_edges=edges)
    by_key = {(chk.g, chk.p): chk for chk in battery}
    for edge in edges:
        for p in (0.4, 0.6):
            direct = verify_switching(g, p, marked, tree, edge)
            fast = by_key[(direct.g, p)]
            assert fast.lhs == pytest.approx(direct.lhs, abs=1e-14)
            assert fast.rhs == pytest.approx(direct.rhs, abs=1e-14)


def test_switching_guards():
    g, marked = two_route_y_graph()
    with pytest.raises(ValueError):
        verify_switching(g, 1.0, marked, three_leaf_tree(), ((0, 0), (1, 0)))
    with pytest.raises(ValueError):
        verify_switching(box(2, 2), 0.5, marked, three_leaf_tree(), ((0, 0), (1, 0)))


def test_bubble_switch_identity_and_weightings():
    graph, f, x1, x2 = bubble_switch_graph()
    for G in (
        constant_subset_function(),
        indicator_subset_function([(0, 0), (1, 0), (0, 1), (1, 1), (2, 0)]),
        seeded_subset_function(3),
    ):
        check = verify_bubble_switch(graph, 0.5, f, 1, x1, x2, G)
        assert check.residual < 1e-14
    flat = verify_bubble_switch(graph, 0.5, f, 1, x1, x2, constant_subset_function())
    assert flat.lhs == pytest.approx(1.0 / 256.0, abs=1e-15)
    assert not flat.vacuous


# -- inequalities -------------------------------------------------------------


def test_bk_inequality_and_equality_cases():
    g = box(1, 3)  # a path of six edges
    A = connection_event((-3,), (-1,))
    B = connection_event((1,), (3,))
    lhs, rhs = verify_bk(g, 0.5, A, B)
    # vertex-disjoint demands: disjoint occurrence is plain intersection
    assert lhs == pytest.approx(rhs, abs=1e-14)

    C = connection_event((-1,), (1,))
    D = connection_event((0,), (2,))
    lhs, rhs = verify_bk(g, 0.6, C, D)
    assert lhs <= rhs + 1e-14
    assert lhs < rhs  # the shared edge makes it strict here


def test_bk_guards():
    g = box(1, 3)
    with pytest.raises(ValueError):
        verify_bk(g, 0.5, gamma_event([(0,), (1,)]), connection_event((0,), (1,)))
    with pytest.raises(ValueError):
        verify_bk(
            box(2, 2), 0.5, connection_event((0, 0), (1, 1)),
            connection_event((0, 0), (1, 1)),
        )


@settings(max_examples=40, deadline=None)
@given(
    ends=st.lists(st.integers(-3, 3), min_size=4, max_size=4),
    p=st.sampled_from([0.3, 0.5, 0.7]),
)
def test_bk_holds_for_random_interval_demands(ends, p):
    g = box(1, 3)
    A = connection_event((ends[0],), (ends[1],))
    B = connection_event((ends[2],), (ends[3],))
    lhs, rhs = verify_bk(g, p, A, B)
    assert lhs <= rhs + 1e-12


def test_tree_bound_frozen_four_corner_values():
    tau_k, bound = verify_tree_bound(
        box(2, 1), 0.4, [(-1, -1), (1, -1), (1, 1), (-1, 1)]
    )
    assert tau_k == pytest.approx(0.04126198988800017, rel=1e-12)
    assert bound == pytest.approx(0.9104102456377219, rel=1e-12)
    assert tau_k <= bound


def test_tree_bound_guards():
    with pytest.raises(ValueError):
        verify_tree_bound(box(2, 1), 0.4, [(-1, -1), (1, 1)])  # k=2
    with pytest.raises(ValueError):
        verify_tree_bound(box(2, 2), 0.4, [(-2, -2), (2, 2), (0, 2)])  # too big


# -- witness structure --------------------------------------------------------


def test_witness_report_on_a_plain_junction():
    g, marked = two_route_y_graph()
    from percolab.conntree import build_connectivity_tree

    open_pairs = [
        ((0, 0), (1, 0)),
        ((1, 0), (2, 0)),
        ((2, 0), (3, 1)),
        ((3, 1), (4, 2)),
        ((2, 0), (3, -1)),
        ((3, -1), (4, -2)),
    ]
    config = _config(g, open_pairs)
    tree = build_connectivity_tree(config, marked)
    report = verify_witness_structure(config, tree, (2, 0))
    assert report.ok
    assert len(report.disjoint_paths) == 1


def test_witness_rejects_vertices_outside_the_tree():
    g, marked = two_route_y_graph()
    from percolab.conntree import build_connectivity_tree

    config = _config(
        g,
        [
            ((0, 0), (1, 0)),
            ((1, 0), (2, 0)),
            ((2, 0), (3, 1)),
            ((3, 1), (4, 2)),
            ((2, 0), (3, -1)),
            ((3, -1), (4, -2)),
        ],
    )
    tree = build_connectivity_tree(config, marked)
    with pytest.raises(ValueError):
        verify_witness_structure(config, tree, (9, 9))
