"""Stiffness assembly, compliance, and worst-case compliance evaluation.

The worst-case values here are all cross-checked between independent
routes: closed-form hand calculations, eigenvalue reduction, Monte Carlo
sampling of the load ellipsoid, and bisection on the matrix inequality.
"""

import math

import numpy as np
import pytest

from trussopt import (
    DesignBounds,
    LoadUncertaintyModel,
    assemble_stiffness,
    compliance,
    generate_ground_structure,
    ground_structure_from_lists,
    robustness_lmi_block,
    uncertainty_matrix,
    worst_case_compliance,
    worst_case_compliance_bisection,
    worst_case_compliance_oracle,
)
from trussopt.mechanics import masked_load_matrix

from conftest import load_at


def test_single_bar_stiffness(single_bar):
    gs, bounds = single_bar
    K = assemble_stiffness(gs, bounds, np.array([100.0]))
    # EA/L = 20000 * 100 / 1000, acting along x only
    assert np.allclose(K, [[2000.0, 0.0], [0.0, 0.0]])


def test_single_bar_compliance(single_bar):
    gs, bounds = single_bar
    x = np.array([100.0])
    p = np.array([1e5, 0.0])
    # u = 50 mm, p'u = 5e6 N mm = 5000 J
    assert compliance(gs, bounds, x, p) == pytest.approx(5000.0)


def test_compliance_edge_cases(single_bar):
    gs, bounds = single_bar
    x = np.array([100.0])
    assert compliance(gs, bounds, x, np.zeros(2)) == 0.0
    # transverse load has no resisting member
    assert math.isinf(compliance(gs, bounds, x, np.array([0.0, 1.0])))
    # empty design cannot carry anything
    assert math.isinf(compliance(gs, bounds, np.zeros(1), np.array([1.0, 0.0])))


def test_stiffness_is_symmetric_psd():
    rng = np.random.default_rng(3)
    gs = generate_ground_structure(2, 2, 1000.0, 3000.0)
    bounds = DesignBounds(0.0, 700.0, 1e6)
    x = rng.uniform(0.0, 700.0, gs.member_count)
    K = assemble_stiffness(gs, bounds, x)
    assert np.allclose(K, K.T)
    assert np.min(np.linalg.eigvalsh(K)) >= -1e-9 * np.linalg.norm(K)


def test_uncertainty_matrix_columns():
    Q = uncertainty_matrix(np.array([3.0, 4.0]), 1.0)
    assert np.allclose(Q[:, 0], [3.0, 4.0])
    assert np.allclose(Q.T @ Q, np.diag([25.0, 1.0]))


def test_uncertainty_matrix_axis_aligned():
    Q = uncertainty_matrix(np.array([7.0, 0.0, 0.0]), 2.0)
    assert Q.shape == (3, 3)
    assert np.allclose(Q @ Q.T, np.diag([49.0, 4.0, 4.0]))
    # remaining columns stay orthogonal to the nominal load
    assert np.allclose(Q[:, 1:].T @ Q[:, :1], 0.0)


def test_zero_alpha_reduces_to_nominal():
    gs = ground_structure_from_lists(
        positions=[(0.0, 0.0), (0.0, 1000.0), (1000.0, 0.0)],
        supports=[(True, True), (True, True), (False, False)],
        member_pairs=[(0, 2), (1, 2)],
    )
    bounds = DesignBounds(0.0, 700.0, 1e6)
    x = np.array([120.0, 80.0])
    p = np.array([1e5, -3e4])
    model = LoadUncertaintyModel.build(p, 0.0)
    s = np.ones(gs.dof_count)
    w = worst_case_compliance(gs, bounds, x, s, model)
    assert w == pytest.approx(compliance(gs, bounds, x, p), rel=1e-10)


def test_masked_load_matrix_zeroes_rows():
    p = np.array([1e5, 0.0, 0.0, 0.0])
    model = LoadUncertaintyModel.build(p, 5e4)
    s = np.array([1.0, 0.0, 1.0, 0.0])
    P = masked_load_matrix(model, s)
    assert np.allclose(P[1], 0.0)
    assert np.allclose(P[3], 0.0)
    assert np.allclose(P[0], model.Q[0])
    assert np.allclose(P[2], model.Q[2])


def test_worst_case_dominates_nominal(two_bar_triangle):
    gs, bounds = two_bar_triangle
    x = np.array([100.0, 100.0])
    p = np.array([1e5, 0.0])
    model = LoadUncertaintyModel.build(p, 0.75e5)
    s = np.ones(2)
    w = worst_case_compliance(gs, bounds, x, s, model)
    assert w >= compliance(gs, bounds, x, p) - 1e-9
    assert math.isfinite(w)


def test_worst_case_monte_carlo(two_bar_triangle):
    gs, bounds = two_bar_triangle
    rng = np.random.default_rng(11)
    x = np.array([140.0, 60.0])
    model = LoadUncertaintyModel.build(np.array([1e5, 0.0]), 0.75e5)
    s = np.ones(2)
    w = worst_case_compliance(gs, bounds, x, s, model)
    best = 0.0
    for _ in range(2000):
        e = rng.normal(size=2)
        e /= np.linalg.norm(e)
        c = compliance(gs, bounds, x, s * (model.Q @ e))
        assert c <= w * (1.0 + 1e-9)
        best = max(best, c)
    assert best >= 0.99 * w  # the sphere sampling should come close


def test_worst_case_masking_is_monotone(two_bar_triangle):
    gs, bounds = two_bar_triangle
    x = np.array([100.0, 100.0])
    model = LoadUncertaintyModel.build(np.array([1e5, 0.0]), 0.75e5)
    w_full = worst_case_compliance(gs, bounds, x, np.ones(2), model)
    w_masked = worst_case_compliance(gs, bounds, x, np.array([1.0, 0.0]), model)
    assert w_masked <= w_full + 1e-12


def test_chain_is_unstable_under_uncertainty():
    """A node inside a collinear chain cannot resist the transverse
    component of the load ellipsoid, so the worst case blows up."""
    gs = ground_structure_from_lists(
        positions=[(0.0, 0.0), (1000.0, 0.0), (2000.0, 0.0)],
        supports=[(True, True), (False, False), (False, False)],
        member_pairs=[(0, 1), (1, 2)],
    )
    bounds = DesignBounds(0.0, 700.0, 1e6)
    x = np.array([100.0, 100.0])
    p = load_at(gs, (2000.0, 0.0), fy=0.0, fx=1e5)
    model = LoadUncertaintyModel.build(p, 0.75e5)
    w = worst_case_compliance(gs, bounds, x, np.ones(gs.dof_count), model)
    assert math.isinf(w)


def test_lmi_block_certifies_worst_case(two_bar_triangle):
    gs, bounds = two_bar_triangle
    x = np.array([90.0, 150.0])
    model = LoadUncertaintyModel.build(np.array([1e5, -2e4]), 0.5e5)
    s = np.ones(2)
    w_star = worst_case_compliance(gs, bounds, x, s, model)
    d = gs.dof_count
    W_ok = robustness_lmi_block(gs, bounds, model, x, s, w_star * (1 + 1e-6))
    W_bad = robustness_lmi_block(gs, bounds, model, x, s, w_star * (1 - 1e-3))
    assert W_ok.shape == (2 * d, 2 * d)
    scale = np.linalg.norm(W_ok)
    assert np.min(np.linalg.eigvalsh(W_ok)) >= -1e-9 * scale
    assert np.min(np.linalg.eigvalsh(W_bad)) < 0.0
    # stiffness block carries kN/mm so the certified value stays in J
    assert np.allclose(
        W_ok[d:, d:], assemble_stiffness(gs, bounds, x) / 1000.0
    )


def test_oracle_routes_agree(two_bar_triangle):
    gs, bounds = two_bar_triangle
    x = np.array([100.0, 50.0])
    model = LoadUncertaintyModel.build(np.array([1e5, 0.0]), 0.75e5)
    s = np.ones(2)
    w_eig = worst_case_compliance(gs, bounds, x, s, model)
    w_val = worst_case_compliance_oracle(gs, bounds, x, s, model)
    w_bis = worst_case_compliance_bisection(gs, bounds, x, s, model, rel_tol=1e-9)
    assert w_val == pytest.approx(w_eig, rel=1e-9)
    assert w_bis == pytest.approx(w_eig, rel=1e-7)


def test_bisection_matches_oracle_on_random_instances():
    # independent routes: eigenvalue reduction vs bisection on the LMI
    rng = np.random.default_rng(2024)
    gs = generate_ground_structure(2, 1, 1000.0, 3000.0, True)
    bounds = DesignBounds(0.0, 700.0, 1e6)
    d = gs.dof_count
    assert d <= 10
    checked = 0
    for _ in range(30):
        x = rng.uniform(50.0, 700.0, gs.member_count)
        p = np.zeros(d)
        p[rng.integers(0, d)] = rng.uniform(2e4, 2e5) * rng.choice([-1.0, 1.0])
        model = LoadUncertaintyModel.build(p, rng.uniform(0.1, 0.9) * np.linalg.norm(p))
        s = np.ones(d)
        w_eig = worst_case_compliance_oracle(gs, bounds, x, s, model)
        w_bis = worst_case_compliance_bisection(gs, bounds, x, s, model, rel_tol=1e-7)
        assert w_bis == pytest.approx(w_eig, rel=1e-5)
        checked += 1
    assert checked == 30


def test_design_bounds_defaults():
    b = DesignBounds(1.0, 700.0, 4e5)
    assert b.young_modulus == 20000.0
    assert (b.x_lower, b.x_upper, b.volume_bound) == (1.0, 700.0, 4e5)


def test_loaded_dofs_follow_nominal_support():
    p = np.array([0.0, -1e5, 0.0, 3e4])
    model = LoadUncertaintyModel.build(p, 0.75e5)
    assert model.loaded_dofs == frozenset({1, 3})
    assert model.alpha == pytest.approx(0.75e5)
