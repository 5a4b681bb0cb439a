"""Continuum tree integrals, the deterministic quadrature, and assembly."""

import json
import math

import numpy as np
import pytest

from percolab.integrals import (
    LimitInputs,
    load_limit_inputs,
    predicted_kpoint_constant,
    three_point_quad,
    tree_integral_mc,
)
from percolab.trees import enumerate_trees, three_leaf_tree

D = 7
E1 = [1, 0, 0, 0, 0, 0, 0]
E2 = [0, 1, 0, 0, 0, 0, 0]
ORIGIN = [0] * D


# -- sampled tree integral ----------------------------------------------------


def test_input_guards():
    tree = three_leaf_tree()
    with pytest.raises(ValueError):
        tree_integral_mc(tree, [ORIGIN, E1], D)  # one point short
    with pytest.raises(ValueError):
        tree_integral_mc(tree, [ORIGIN, E1, E1], D)  # coincident
    with pytest.raises(ValueError):
        tree_integral_mc(tree, [ORIGIN[:4], E1[:4], E2[:4]], 4)  # d too small
    with pytest.raises(ValueError):
        tree_integral_mc(tree, [ORIGIN, E1, E2], D, samples=0)


def test_estimates_are_deterministic_and_worker_independent():
    tree = three_leaf_tree()
    y = [ORIGIN, E1, E2]
    a = tree_integral_mc(tree, y, D, samples=150_000, seed=9)
    b = tree_integral_mc(tree, y, D, samples=150_000, seed=9)
    c = tree_integral_mc(tree, y, D, samples=150_000, seed=9, workers=4)
    assert a.mean == b.mean and a.stderr == b.stderr
    assert a.mean == c.mean and a.stderr == c.stderr
    assert a.samples >= 150_000


def test_stderr_shrinks_like_root_n():
    tree = three_leaf_tree()
    y = [ORIGIN, E1, E2]
    sizes = [40_000, 80_000, 160_000, 320_000]
    errs = [
        tree_integral_mc(tree, y, D, samples=n, seed=21).stderr for n in sizes
    ]
    slope = np.polyfit(np.log(sizes), np.log(errs), 1)[0]
    assert slope == pytest.approx(-0.5, abs=0.15)


def test_leaf_exchange_symmetry():
    tree = three_leaf_tree()
    a = tree_integral_mc(tree, [ORIGIN, E1, E2], D, samples=200_000, seed=5)
    b = tree_integral_mc(tree, [ORIGIN, E2, E1], D, samples=200_000, seed=5)
    sigma = math.hypot(a.stderr, b.stderr)
    assert abs(a.mean - b.mean) <= 2.0 * sigma


def test_translation_invariance():
    tree = three_leaf_tree()
    shift = np.array([3.0, -1.0, 2.0, 0.0, 0.0, 1.0, 0.0])
    y = np.array([ORIGIN, E1, E2], dtype=float)
    a = tree_integral_mc(tree, y, D, samples=250_000, seed=13)
    b = tree_integral_mc(tree, y + shift, D, samples=250_000, seed=14)
    sigma = math.hypot(a.stderr, b.stderr)
    assert abs(a.mean - b.mean) <= 4.0 * sigma


def test_homogeneity_exponent_at_two_scales():
    tree = three_leaf_tree()
    y = np.array([ORIGIN, E1, E2], dtype=float)
    base = tree_integral_mc(tree, y, D, samples=250_000, seed=31)
    doubled = tree_integral_mc(tree, 2.0 * y, D, samples=250_000, seed=32)
    expected = 2.0 ** ((4 - D) * 3 + D - 6)
    ratio = doubled.mean / base.mean
    sigma = ratio * math.hypot(
        base.stderr / base.mean, doubled.stderr / doubled.mean
    )
    assert abs(ratio - expected) <= 4.0 * sigma


def test_matches_the_deterministic_quadrature():
    quad = three_point_quad(E1, E2, D)
    est = tree_integral_mc(
        three_leaf_tree(), [ORIGIN, E1, E2], D, samples=300_000, seed=2
    )
    tol = max(4.0 * math.hypot(est.stderr, quad.error), 0.05 * quad.value)
    assert abs(est.mean - quad.value) <= tol


# -- deterministic quadrature -------------------------------------------------


def test_quad_guards():
    with pytest.raises(ValueError):
        three_point_quad(E1, E1, D)
    with pytest.raises(ValueError):
        three_point_quad([1, 0, 0, 0], [0, 1, 0, 0], 4)
    with pytest.raises(ValueError):
        three_point_quad(E1, E2, D, cutoff=0.5)


def test_quad_symmetry_and_rotation():
    a = three_point_quad(E1, E2, D)
    b = three_point_quad(E2, E1, D)
    assert abs(a.value - b.value) <= a.error + b.error
    # rotate both points by 90 degrees in the (0, 1) plane
    r1 = [0, 1, 0, 0, 0, 0, 0]
    r2 = [-1, 0, 0, 0, 0, 0, 0]
    c = three_point_quad(r1, r2, D)
    assert abs(a.value - c.value) <= a.error + c.error


def test_quad_collinear_points_are_supported():
    two_e1 = [2, 0, 0, 0, 0, 0, 0]
    q = three_point_quad(E1, two_e1, D)
    assert q.value > 0 and math.isfinite(q.value)


def test_quad_cutoff_stability():
    base = three_point_quad(E1, E2, D)
    wider = three_point_quad(E1, E2, D, cutoff=2.0 * base.cutoff)
    assert abs(wider.value - base.value) <= base.tail + wider.error + base.error


# -- limit inputs and assembly ------------------------------------------------


def test_limit_inputs_validation():
    inputs = LimitInputs(alpha=1.2, p_c=0.5, rho=0.8, d=7)
    assert inputs.beta == pytest.approx(1.0)
    with pytest.raises(ValueError):
        LimitInputs(alpha=0.0, p_c=0.5, rho=0.8, d=7)
    with pytest.raises(ValueError):
        LimitInputs(alpha=1.0, p_c=1.0, rho=0.8, d=7)
    with pytest.raises(ValueError, match="requires d > 6"):
        LimitInputs(alpha=1.0, p_c=0.5, rho=0.8, d=6)


def test_load_limit_inputs_sources(tmp_path):
    payload = {"alpha": 1.5, "p_c": 0.25, "rho": 2.0, "d": 8}
    from_dict = load_limit_inputs(payload)
    from_text = load_limit_inputs(json.dumps(payload))
    path = tmp_path / "inputs.json"
    path.write_text(json.dumps(payload))
    from_file = load_limit_inputs(str(path))
    for inputs in (from_dict, from_text, from_file):
        assert inputs.alpha == 1.5
        assert inputs.beta == pytest.approx(1.0 / 3.0)
    with pytest.raises(ValueError, match="missing field: rho"):
        load_limit_inputs({"alpha": 1.0, "p_c": 0.5, "d": 7})


def test_prediction_reduces_to_one_term_at_three_points():
    inputs = LimitInputs(alpha=1.3, p_c=0.5, rho=0.7, d=D)
    y = [ORIGIN, E1, E2]
    pred = predicted_kpoint_constant(3, y, inputs, samples=60_000, seed=8)
    assert pred.k == 3
    assert len(pred.terms) == 1
    integral = tree_integral_mc(
        three_leaf_tree(), y, D, samples=60_000, seed=8
    )
    coefficient = 2 * D * inputs.alpha**3 * inputs.beta * inputs.rho
    assert pred.value == pytest.approx(coefficient * integral.mean, rel=1e-12)
    assert pred.stderr == pytest.approx(coefficient * integral.stderr, rel=1e-12)


def test_prediction_scales_in_alpha_and_rho():
    base_inputs = LimitInputs(alpha=1.0, p_c=0.5, rho=1.0, d=D)
    y = [ORIGIN, E1, E2]
    base = predicted_kpoint_constant(3, y, base_inputs, samples=40_000, seed=3)
    doubled_alpha = predicted_kpoint_constant(
        3, y, LimitInputs(alpha=2.0, p_c=0.5, rho=1.0, d=D), samples=40_000, seed=3
    )
    doubled_rho = predicted_kpoint_constant(
        3, y, LimitInputs(alpha=1.0, p_c=0.5, rho=2.0, d=D), samples=40_000, seed=3
    )
    assert doubled_alpha.value == pytest.approx(8.0 * base.value, rel=1e-12)
    assert doubled_rho.value == pytest.approx(2.0 * base.value, rel=1e-12)


def test_prediction_sums_the_four_point_census():
    inputs = LimitInputs(alpha=1.0, p_c=0.5, rho=1.0, d=D)
    e3 = [0, 0, 1, 0, 0, 0, 0]
    y = [ORIGIN, E1, E2, e3]
    trees = enumerate_trees(4)
    full = predicted_kpoint_constant(4, y, inputs, samples=30_000, seed=6)
    assert len(full.terms) == 3
    partial = predicted_kpoint_constant(
        4, y, inputs, samples=30_000, seed=6, trees=trees[:1]
    )
    assert len(partial.terms) == 1
    assert partial.value < full.value
