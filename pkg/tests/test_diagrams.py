"""Kernel sums and diagram valuations against direct summation."""

import math

import numpy as np
import pytest

from percolab.diagrams import (
    Diagram,
    check_convolution,
    contract_cherry,
    cycle_diagram,
    evaluate_diagram,
    exact_work,
    fit_scaling,
    one_loop,
    one_loop_diagram,
    region_filter,
    single_edge_diagram,
    star_diagram,
    tree_diagram,
    tree_reduce,
)
from percolab.kernels import (
    active_axes,
    bracket,
    kernel_product_sum,
    kernel_sum_work,
    linf_shell_count,
    riesz,
    squared_norm_counts,
)
from percolab.trees import three_leaf_tree


# -- kernels ------------------------------------------------------------------


def test_bracket_and_riesz_basics():
    assert riesz([0, 0, 0], -5.0) == pytest.approx(1.0, abs=1e-15)
    assert riesz([2, 0, 0, 0, 0, 0, 0], 2 - 7) == pytest.approx(
        5.0 ** (-2.5), rel=1e-15
    )
    assert bracket(np.array([3, 4])) == pytest.approx(math.sqrt(26.0), rel=1e-15)
    # decay in |x|
    assert riesz([5, 0], -3.0) < riesz([2, 0], -3.0)


def test_shell_counts():
    assert linf_shell_count(2, 0) == 1
    assert linf_shell_count(2, 1) == 8
    assert linf_shell_count(3, 2) == 5**3 - 3**3
    counts = squared_norm_counts(2, 2)
    # [-2,2]^2 has 25 points; squared norms 0..8
    assert counts.sum() == 25
    assert counts[0] == 1
    assert counts[1] == 4
    assert counts[2] == 4
    assert counts[8] == 4


def test_kernel_product_sum_matches_direct_summation():
    d, L = 4, 5
    pins = [np.array([0, 0, 0, 0]), np.array([3, 0, 0, 0])]
    exponents = [2.0 - d, 2.0 - d]
    fast = kernel_product_sum(d, L, list(zip(pins, exponents)))
    grid = np.stack(
        np.meshgrid(*([np.arange(-L, L + 1)] * d), indexing="ij"), axis=-1
    ).reshape(-1, d)
    direct = float(
        np.sum(
            np.prod(
                [
                    bracket(grid - pin[None, :]) ** e
                    for pin, e in zip(pins, exponents)
                ],
                axis=0,
            )
        )
    )
    assert fast == pytest.approx(direct, rel=1e-12)


def test_work_model_counts_active_axes():
    pins = [np.array([1, 0, 0, 0, 0, 0, 0]), np.array([0, 2, 0, 0, 0, 0, 0])]
    assert active_axes(pins) == [0, 1]
    w = kernel_sum_work(7, 10, pins)
    assert w == pytest.approx(21**2 * (5 * 100 + 1) * 2)


# -- diagram construction -----------------------------------------------------


def test_diagram_validation():
    with pytest.raises(ValueError):
        Diagram(pinned=(("a", (0, 0)),), free=("a",), edges=())
    with pytest.raises(ValueError):
        Diagram(pinned=(("a", (0, 0)),), free=(), edges=(("a", "ghost", None),))
    with pytest.raises(ValueError):
        Diagram(pinned=(("a", (0, 0)), ("b", (0,))), free=(), edges=())
    with pytest.raises(ValueError):
        cycle_diagram([(0, 0), (1, 0)])


def test_default_truncation_scales_with_pins():
    near = star_diagram([(0, 0), (1, 0), (0, 1)])
    far = star_diagram([(0, 0), (12, 0), (0, 12)])
    assert near.default_truncation() == 8
    assert far.default_truncation() == 48


def test_tree_diagram_mirrors_the_shape():
    tree = three_leaf_tree()
    diagram = tree_diagram(tree, [(0, 0), (4, 0), (0, 4)])
    assert len(diagram.pinned) == 3
    assert len(diagram.free) == 1
    assert len(diagram.edges) == 3


# -- valuation ----------------------------------------------------------------


def test_single_edge_value_is_the_kernel():
    d = 7
    diagram = single_edge_diagram("a", (0,) * d, "b", (3, 0, 0, 0, 0, 0, 0))
    value = evaluate_diagram(diagram, d).value
    assert value == pytest.approx(riesz([3, 0, 0, 0, 0, 0, 0], 2 - d), rel=1e-12)


def test_star_exact_sum_matches_scratch_summation():
    """Shell-collapsed exact sum against a from-scratch five-dimensional sum."""
    d, L, n = 5, 12, 8
    pins = [(0,) * d, (n, 0, 0, 0, 0), (0, n, 0, 0, 0)]
    diagram = star_diagram(pins)
    fast = evaluate_diagram(diagram, d, L=L, method="exact-sum")
    assert fast.method == "exact-sum"
    assert fast.stderr == 0.0

    pin_arrays = [np.asarray(p, dtype=np.float64) for p in pins]
    rest = np.stack(
        np.meshgrid(*([np.arange(-L, L + 1)] * (d - 1)), indexing="ij"), axis=-1
    ).reshape(-1, d - 1)
    tail_sq = [np.sum((rest - p[1:][None, :]) ** 2, axis=1) for p in pin_arrays]
    partials = []
    for x0 in range(-L, L + 1):
        product = np.ones(rest.shape[0])
        for p, tail in zip(pin_arrays, tail_sq):
            sq = 1.0 + (x0 - p[0]) ** 2 + tail
            product = product * sq ** ((2.0 - d) / 2.0)
        partials.append(float(product.sum()))
    direct = math.fsum(partials)
    assert fast.value == pytest.approx(direct, rel=1e-11)


def test_star_importance_sampling_agrees_with_exact():
    d, L = 5, 6
    pins = [(0,) * d, (4, 0, 0, 0, 0), (0, 4, 0, 0, 0)]
    diagram = star_diagram(pins)
    exact = evaluate_diagram(diagram, d, L=L, method="exact-sum").value
    mc = evaluate_diagram(
        diagram, d, L=L, method="importance-mc", samples=300_000, seed=11
    )
    assert mc.stderr > 0
    assert abs(mc.value - exact) <= 4.0 * mc.stderr


def test_value_is_monotone_in_truncation():
    d = 5
    diagram = star_diagram([(0,) * d, (4, 0, 0, 0, 0), (0, 4, 0, 0, 0)])
    small = evaluate_diagram(diagram, d, L=6, method="exact-sum").value
    large = evaluate_diagram(diagram, d, L=9, method="exact-sum").value
    assert large > small


def test_mc_is_deterministic_and_worker_independent():
    d = 7
    pins = [(0,) * d, tuple([5] * d), tuple([-3] * d)]  # all axes active
    diagram = star_diagram(pins)
    assert exact_work(diagram, d, diagram.default_truncation()) > 1e9
    auto = evaluate_diagram(diagram, d, samples=120_000, seed=4)
    assert auto.method == "importance-mc"
    again = evaluate_diagram(diagram, d, samples=120_000, seed=4, workers=3)
    assert again.value == auto.value
    assert again.stderr == auto.stderr


def test_doubling_report_carries_the_larger_box():
    d = 5
    diagram = star_diagram([(0,) * d, (3, 0, 0, 0, 0), (0, 3, 0, 0, 0)])
    value = evaluate_diagram(diagram, d, L=5, doubling_report=True)
    assert value.doubling is not None
    assert value.doubling["truncation"] == 10
    assert value.doubling["value"] > value.value


# -- convolution comparisons --------------------------------------------------


def test_convolution_std_ratio_is_scale_stable():
    ratios = [
        check_convolution(5, [n, 0, 0, 0, 0], [0, n, 0, 0, 0]).ratio
        for n in (4, 8, 16)
    ]
    assert max(ratios) / min(ratios) < 3.0


def test_convolution_variants_validate_inputs():
    with pytest.raises(ValueError):
        check_convolution(5, [1, 0, 0, 0, 0], [0, 1, 0, 0, 0], a=3.0, b=3.0)
    with pytest.raises(ValueError):
        check_convolution(5, [1, 0, 0, 0, 0], [0, 1, 0, 0, 0], variant="nope")
    tri = check_convolution(
        5, [6, 0, 0, 0, 0], [0, 6, 0, 0, 0], variant="triple", w=[3, 3, 0, 0, 0]
    )
    assert tri.lhs > 0 and tri.rhs > 0


# -- reductions ---------------------------------------------------------------


def test_cherry_contraction_produces_two_smaller_trees():
    tree = three_leaf_tree()
    diagram = tree_diagram(tree, [(0, 0), (6, 0), (0, 6)])
    junction = diagram.free[0]
    contraction = contract_cherry(diagram, junction, d=7, keep="x0")
    assert contraction.scale_exponent == -3.0
    for sub in contraction.subdiagrams:
        assert junction not in sub.free
        assert len(sub.pinned) == len(diagram.pinned) - 1


def test_tree_reduce_counts_steps_and_exponent():
    from percolab.trees import enumerate_trees

    tree = enumerate_trees(4)[0]
    diagram = tree_diagram(tree, [(0, 0), (8, 0), (0, 8), (8, 8)])
    reduction = tree_reduce(diagram, "x0", d=7)
    assert reduction.steps == 2
    assert reduction.total_exponent == pytest.approx(2 * (4 - 7))
    assert reduction.residual_leaves  # every branch ends at a root edge
    with pytest.raises(ValueError):
        tree_reduce(one_loop_diagram((0, 0), (4, 4), 7), "w1", 7)


# -- one-loop and fits --------------------------------------------------------


def test_one_loop_is_symmetric_and_guards_truncation():
    d = 7
    a = one_loop((0,) * d, (6, 0, 0, 0, 0, 0, 0), d, n=2, samples=50_000, seed=3)
    b = one_loop((6, 0, 0, 0, 0, 0, 0), (0,) * d, d, n=2, samples=50_000, seed=3)
    assert a.value == b.value
    with pytest.raises(ValueError):
        one_loop((0,) * d, (6, 0, 0, 0, 0, 0, 0), d, n=2, L=5)
    with pytest.raises(ValueError):
        one_loop((0,) * d, (1, 0, 0, 0, 0, 0, 0), d, n=4, eps=0.5)


def test_region_filter_far_separation():
    assert region_filter([(0.0, 0.0), (10.0, 0.0)], eps=0.5, n=10, kind="G")
    assert not region_filter([(0.0, 0.0), (3.0, 0.0)], eps=0.5, n=10, kind="G")
    assert region_filter([(0.0, 0.0), (10.0, 0.0)], eps=0.5, n=10, kind="F")
    with pytest.raises(ValueError):
        region_filter([(0.0, 0.0)], eps=0.5, n=10, kind="G")
    with pytest.raises(ValueError):
        region_filter([(0.0, 0.0), (1.0, 1.0)], eps=0.5, n=10, kind="Q")


def test_fit_scaling_recovers_a_power_law():
    pairs = [(n, 3.0 * n**-2.5) for n in (4, 8, 16, 32)]
    fit = fit_scaling(pairs)
    assert fit.slope == pytest.approx(-2.5, abs=1e-12)
    assert fit.intercept == pytest.approx(math.log(3.0), abs=1e-12)
    assert fit.residual_max < 1e-12
    with pytest.raises(ValueError):
        fit_scaling([(4, 1.0)])
    with pytest.raises(ValueError):
        fit_scaling([(4, 1.0), (8, -1.0)])
