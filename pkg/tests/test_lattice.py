"""Graph construction, configuration sampling, and connectivity queries."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from percolab.lattice import (
    Configuration,
    ConnectionDemand,
    Graph,
    box,
    clusters,
    config_from_json,
    config_to_json,
    connected,
    connected_any,
    disjointly_occurs,
    doubly_connected,
    enumerate_configurations,
    graph_from_edge_text,
    graph_to_edge_text,
    open_path,
    sample_configuration,
    vertices_within,
)

from _oracles import reachable_without_edge


# -- graphs -------------------------------------------------------------------


def test_box_counts():
    g = box(2, 1)
    assert g.n_vertices == 9
    assert g.n_edges == 12
    g3 = box(3, 1)
    assert g3.n_vertices == 27
    # per axis: 2R * (2R+1)^(d-1) edges
    assert g3.n_edges == 3 * 2 * 9


def test_box_center_and_boundary():
    g = box(2, 2)
    assert g.box_center == (0, 0)
    assert g.box_radius == 2
    shell = g.boundary_vertices()
    assert len(shell) == 16
    assert all(max(abs(c) for c in v) == 2 for v in shell)


def test_box_with_center_offset():
    g = box(2, 1, center=(5, -3))
    assert (5, -3) in g.index
    assert (6, -2) in g.index
    assert g.n_edges == 12


def test_graph_rejects_self_loop_and_stray_edges():
    with pytest.raises(ValueError):
        Graph([(0, 0)], [((0, 0), (0, 0))])
    with pytest.raises(ValueError):
        Graph([(0, 0), (1, 0)], [((0, 0), (2, 0))])


def test_graph_indexing_is_order_independent():
    vs = [(0, 0), (1, 0), (0, 1)]
    es = [((0, 0), (1, 0)), ((0, 0), (0, 1))]
    a = Graph(vs, es)
    b = Graph(list(reversed(vs)), [tuple(reversed(e)) for e in reversed(es)])
    assert a.vertices == b.vertices
    assert a.edges == b.edges
    assert a.content_hash() == b.content_hash()


def test_edge_index_rejects_non_edges():
    g = box(2, 1)
    assert g.edge_index((0, 0), (0, 1)) == g.edge_index((0, 1), (0, 0))
    with pytest.raises(KeyError):
        g.edge_index((-1, -1), (1, 1))


def test_edge_text_round_trip():
    g = box(2, 1)
    text = graph_to_edge_text(g)
    h = graph_from_edge_text(text)
    assert h.vertices == g.vertices
    assert h.edges == g.edges
    assert h.content_hash() == g.content_hash()


def test_edge_text_comments_and_blanks():
    text = "# a tiny path\n(0,0) (1,0)\n\n(1,0) (2,0)\n"
    g = graph_from_edge_text(text)
    assert g.n_vertices == 3
    assert g.n_edges == 2


def test_edge_text_malformed_line_raises():
    with pytest.raises(ValueError):
        graph_from_edge_text("(0,0) (1,0) (2,0)")
    with pytest.raises(ValueError):
        graph_from_edge_text("(0,0)")


def test_vertices_within_is_a_sup_ball():
    g = box(2, 2)
    ball = vertices_within(g, (0, 0), 1)
    assert ball == frozenset(
        (i, j) for i in (-1, 0, 1) for j in (-1, 0, 1)
    )


# -- configurations -----------------------------------------------------------


def test_sampling_extremes():
    g = box(2, 2)
    closed = sample_configuration(g, 0.0, seed=1)
    assert not closed.open_mask.any()
    opened = sample_configuration(g, 1.0, seed=1)
    assert opened.open_mask.all()


def test_sampling_is_deterministic_per_stream():
    g = box(2, 2)
    a = sample_configuration(g, 0.5, seed=9, stream_index=3)
    b = sample_configuration(g, 0.5, seed=9, stream_index=3)
    c = sample_configuration(g, 0.5, seed=9, stream_index=4)
    assert np.array_equal(a.open_mask, b.open_mask)
    assert not np.array_equal(a.open_mask, c.open_mask)


def test_config_json_round_trip():
    g = box(2, 1)
    config = sample_configuration(g, 0.6, seed=11)
    text = config_to_json(config, seed=11)
    back = config_from_json(g, text)
    assert np.array_equal(back.open_mask, config.open_mask)
    assert back.p == config.p


def test_config_json_rejects_other_graph():
    g = box(2, 1)
    other = box(2, 2)
    text = config_to_json(sample_configuration(g, 0.5, seed=0))
    with pytest.raises(ValueError):
        config_from_json(other, text)


def test_enumeration_weights_sum_to_one():
    g = box(1, 2)  # 4 edges
    total = sum(w for _, w in enumerate_configurations(g, 0.3))
    assert total == pytest.approx(1.0, abs=1e-12)
    assert sum(1 for _ in enumerate_configurations(g, 0.3)) == 16


# -- connectivity -------------------------------------------------------------


def _mask_config(graph, open_pairs):
    mask = np.zeros(graph.n_edges, dtype=bool)
    for u, v in open_pairs:
        mask[graph.edge_index(u, v)] = True
    return Configuration(graph, mask, 0.5)


def test_connected_endpoints_belong_to_the_region():
    g = box(1, 2)  # path of five vertices on a line
    config = _mask_config(g, [((-2,), (-1,)), ((-1,), (0,)), ((0,), (1,)), ((1,), (2,))])
    assert connected(config, (-2,), (2,))
    # interior vertex removed from the region: the only route is blocked
    region = [v for v in g.vertices if v != (0,)]
    assert not connected(config, (-2,), (2,), region=region)
    # an endpoint outside the region fails even though a path exists
    assert not connected(config, (-2,), (2,), region=[(-2,), (-1,), (0,), (1,)])
    # x == y holds inside the region regardless of edges
    assert connected(config, (1,), (1,), region=[(1,)])


def test_connected_any_matches_pointwise_or():
    g = box(2, 2)
    config = sample_configuration(g, 0.5, seed=4)
    targets = [(2, 2), (-2, -2), (0, 2)]
    expected = any(connected(config, (0, 0), t) for t in targets)
    assert connected_any(config, (0, 0), targets) == expected


def test_open_path_is_open_shortest_and_canonical():
    g = box(2, 2)
    config = sample_configuration(g, 0.7, seed=0)
    path = open_path(config, (-2, -2), (2, 2))
    assert path is not None
    assert path[0] == (-2, -2) and path[-1] == (2, 2)
    for u, v in zip(path, path[1:]):
        assert config.is_open(u, v)
    assert path == open_path(config, (-2, -2), (2, 2))


def test_open_path_none_when_disconnected():
    g = box(1, 1)
    config = _mask_config(g, [])
    assert open_path(config, (-1,), (1,)) is None


def test_doubly_connected_needs_two_routes():
    square = Graph(
        [(0, 0), (1, 0), (1, 1), (0, 1)],
        [((0, 0), (1, 0)), ((1, 0), (1, 1)), ((1, 1), (0, 1)), ((0, 1), (0, 0))],
    )
    both = _mask_config(
        square,
        [((0, 0), (1, 0)), ((1, 0), (1, 1)), ((1, 1), (0, 1)), ((0, 1), (0, 0))],
    )
    assert doubly_connected(both, (0, 0), (1, 1))
    one_route = _mask_config(square, [((0, 0), (1, 0)), ((1, 0), (1, 1))])
    assert not doubly_connected(one_route, (0, 0), (1, 1))
    assert doubly_connected(one_route, (0, 0), (0, 0))  # empty witness


def test_disjoint_occurrence_shared_bottleneck():
    g = box(1, 2)
    config = _mask_config(
        g, [((-2,), (-1,)), ((-1,), (0,)), ((0,), (1,)), ((1,), (2,))]
    )
    separate = [
        ConnectionDemand.of((-2,), (-1,)),
        ConnectionDemand.of((0,), (2,)),
    ]
    assert disjointly_occurs(config, separate)
    overlapping = [
        ConnectionDemand.of((-2,), (0,)),
        ConnectionDemand.of((-1,), (2,)),
    ]
    assert not disjointly_occurs(config, overlapping)


def test_clusters_partition_properties():
    g = box(2, 2)
    config = sample_configuration(g, 0.5, seed=8)
    part = clusters(config)
    sizes = sum(part.size_of(v) for v in {part.representative(v) for v in g.vertices})
    assert sizes == g.n_vertices
    assert part.same_cluster((0, 0), (0, 0))


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10_000), p=st.sampled_from([0.25, 0.5, 0.75]))
def test_clusters_agree_with_breadth_first_search(seed, p):
    """Union-find labels match a from-scratch reachability computation."""
    g = box(2, 1)
    config = sample_configuration(g, p, seed)
    part = clusters(config)
    for i, v in enumerate(g.vertices):
        component = reachable_without_edge(config, i)
        for j, w in enumerate(g.vertices):
            assert part.same_cluster(v, w) == (j in component)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_double_connection_implies_connection(seed):
    g = box(2, 1)
    config = sample_configuration(g, 0.6, seed)
    for target in [(1, 1), (-1, -1), (0, 1)]:
        if doubly_connected(config, (0, 0), target):
            assert connected(config, (0, 0), target)
