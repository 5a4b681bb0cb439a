"""Pivotal-edge extraction: fast bridge-tree route against edge closing."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from percolab.lattice import (
    Configuration,
    Graph,
    box,
    connected,
    doubly_connected,
    sample_configuration,
)
from percolab.pivotals import (
    common_pivotal_extremes,
    open_pivotals,
    open_pivotals_definitional,
    two_edge_connected_labels,
)

from _oracles import definitional_pivotal_edges


def _all_open(graph):
    return Configuration(graph, np.ones(graph.n_edges, dtype=bool), 0.5)


def _path_graph(n):
    pts = [(i,) for i in range(n)]
    return Graph(pts, list(zip(pts, pts[1:])))


def test_chain_every_edge_is_pivotal_in_order():
    g = _path_graph(5)
    config = _all_open(g)
    plist = open_pivotals(config, (0,), (4,))
    assert plist.edges == (
        ((0,), (1,)),
        ((1,), (2,)),
        ((2,), (3,)),
        ((3,), (4,)),
    )
    assert plist.tails == ((0,), (1,), (2,), (3,))
    # swapping the endpoints reverses orientation and order
    back = open_pivotals(config, (4,), (0,))
    assert back.edges == tuple((b, a) for a, b in reversed(plist.edges))


def test_cycle_has_no_pivotal_edges():
    pts = [(0, 0), (1, 0), (1, 1), (0, 1)]
    g = Graph(pts, list(zip(pts, pts[1:])) + [(pts[-1], pts[0])])
    plist = open_pivotals(_all_open(g), (0, 0), (1, 1))
    assert len(plist) == 0


def test_disconnected_pair_raises():
    g = _path_graph(3)
    config = Configuration(g, np.zeros(g.n_edges, dtype=bool), 0.5)
    with pytest.raises(ValueError):
        open_pivotals(config, (0,), (2,))
    with pytest.raises(ValueError):
        open_pivotals_definitional(config, (0,), (2,))


def test_same_point_has_empty_pivotal_list():
    g = _path_graph(3)
    assert open_pivotals(_all_open(g), (1,), (1,)).edges == ()


@settings(max_examples=150, deadline=None)
@given(seed=st.integers(0, 50_000), p=st.sampled_from([0.35, 0.5, 0.65]))
def test_fast_matches_definitional_and_scratch(seed, p):
    """Three independent routes to the pivotal list must agree exactly."""
    g = box(2, 1)
    config = sample_configuration(g, p, seed)
    u, v = (-1, -1), (1, 1)
    if not connected(config, u, v):
        return
    fast = open_pivotals(config, u, v).edges
    slow = open_pivotals_definitional(config, u, v).edges
    scratch = tuple(definitional_pivotal_edges(config, u, v))
    assert fast == slow
    assert fast == scratch


def test_two_edge_connected_labels_match_double_connections():
    g = box(2, 2)
    for seed in range(25):
        config = sample_configuration(g, 0.55, seed)
        labels = two_edge_connected_labels(config)
        for target in [(1, 1), (-2, 0), (2, -2)]:
            i, j = g.index[(0, 0)], g.index[target]
            assert (labels[i] == labels[j]) == doubly_connected(
                config, (0, 0), target
            )


def test_common_extremes_on_a_branching_chain():
    #        (3,1)=t1
    #        /
    # s --- a --- b --- t2
    pts = {"s": (0, 0), "a": (1, 0), "b": (2, 0), "t1": (3, 1), "t2": (3, 0)}
    g = Graph(
        pts.values(),
        [
            (pts["s"], pts["a"]),
            (pts["a"], pts["b"]),
            (pts["b"], pts["t2"]),
            (pts["a"], pts["t1"]),
        ],
    )
    config = _all_open(g)
    first, last = common_pivotal_extremes(config, pts["s"], [pts["t1"], pts["t2"]])
    # only the s->a edge is pivotal for both connections
    assert first == (pts["s"], pts["a"])
    assert last == (pts["s"], pts["a"])


def test_common_extremes_none_cases():
    g = _path_graph(4)
    closed = Configuration(g, np.zeros(g.n_edges, dtype=bool), 0.5)
    assert common_pivotal_extremes(closed, (0,), [(3,)]) == (None, None)

    # two targets on opposite sides of the source share no pivotal edge
    pts = [(i,) for i in range(-2, 3)]
    line = Graph(pts, list(zip(pts, pts[1:])))
    config = _all_open(line)
    assert common_pivotal_extremes(config, (0,), [(-2,), (2,)]) == (None, None)


def test_common_extremes_single_target_reduces_to_pivotal_list():
    g = box(2, 1)
    u, v = (-1, -1), (1, 1)
    seen_nonempty = 0
    for seed in (0, 1, 2, 3, 4, 6):
        config = sample_configuration(g, 0.6, seed)
        assert connected(config, u, v)
        plist = open_pivotals(config, u, v)
        first, last = common_pivotal_extremes(config, u, [v])
        if len(plist) == 0:
            assert (first, last) == (None, None)
        else:
            seen_nonempty += 1
            assert first == plist.edges[0]
            assert last == plist.edges[-1]
    assert seen_nonempty >= 3


@settings(max_examples=80, deadline=None)
@given(seed=st.integers(0, 50_000))
def test_pivotal_tails_are_cut_vertices(seed):
    """Removing any pivotal edge's tail (except the source) cuts the pair."""
    g = box(2, 1)
    config = sample_configuration(g, 0.5, seed)
    u, v = (-1, 0), (1, 0)
    if not connected(config, u, v):
        return
    for tail, head in open_pivotals(config, u, v).edges:
        region = [w for w in g.vertices if w != tail]
        if tail != u:
            assert not connected(config, u, v, region=region)
