import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import conftest
from games import interior_games
from mdpcg.errors import NotStrictlyPositive
from mdpcg.model import make_game, power_cost
from mdpcg.sensitivity import (
    braess_from_gradient,
    closed_form,
    cost_sensitivity,
    detect_braess,
    dual_sensitivity,
    finite_difference_check,
    finite_difference_jacobians,
    flow_sensitivity,
    perturbation_sweep,
    sensitivity,
    sensitivity_at,
    social_cost_sensitivity,
    sweep_grid,
)
from mdpcg.solver import solve, stationary_point

# published social-cost gradient of the bridge example, three decimals
PUBLISHED_GRAD = np.array([0.023, 0.501, -0.478, 0.023, 0.454, 0.477])


def _J(spec, eps):
    eq = solve(spec, eps)
    return float(eq.y @ spec.costs.value(eq.y, eps))


def test_selfloop(selfloop):
    eq = solve(selfloop)
    res = sensitivity(selfloop, eq)
    np.testing.assert_allclose(res.dy_deps, [[0.0]], atol=1e-15)
    np.testing.assert_allclose(res.dl_deps, [[1.0]])
    np.testing.assert_allclose(res.ddual_deps, [[1.0]])
    np.testing.assert_allclose(res.dJ_deps, [1.0])
    assert not detect_braess(selfloop, eq).paradox_possible
    assert finite_difference_check(selfloop, eq) <= 1e-10


def test_swap_pinned_flow(swap):
    sym = make_game(2, [(0, 1), (1, 0)], [1, 1], [0.0, 0.0], mass=2.0)
    for spec in (swap, sym):
        eq = solve(spec)
        np.testing.assert_allclose(flow_sensitivity(spec, eq), np.zeros((2, 2)), atol=1e-14)
        np.testing.assert_allclose(dual_sensitivity(spec, eq)[-1], [0.5, 0.5], atol=1e-14)


def test_wheatstone_refuses_boundary(wheatstone):
    eq = solve(wheatstone)
    with pytest.raises(NotStrictlyPositive, match=r"\[3\]"):
        sensitivity(wheatstone, eq)


def test_published_vector_is_the_stationary_point(wheatstone):
    # the equality-constrained stationary point of the tabulated game
    # reproduces the published gradient but is not a feasible flow
    y, _, _, _ = stationary_point(wheatstone)
    assert y[2] < -0.3
    grad = sensitivity_at(wheatstone, y).dJ_deps
    np.testing.assert_allclose(grad, PUBLISHED_GRAD, atol=5e-3)


def test_interior_variant_gradient(interior):
    # for affine costs the interior gradient does not depend on intercepts
    eq = solve(interior)
    grad = social_cost_sensitivity(interior, eq)
    np.testing.assert_allclose(grad, PUBLISHED_GRAD, atol=5e-3)


def test_interior_finite_differences(interior):
    eq = solve(interior)
    assert finite_difference_check(interior, eq, h=1e-5) <= 1e-4


def test_dual_and_cost_rows_match_fd(interior):
    eq = solve(interior)
    res = sensitivity(interior, eq)
    fd_dy, fd_dl, fd_dd, fd_dJ = finite_difference_jacobians(interior, eq)
    rel = lambda a, b: np.linalg.norm(a - b) / np.linalg.norm(a)  # noqa: E731
    assert rel(res.ddual_deps[-1], fd_dd[-1]) <= 1e-4
    assert rel(cost_sensitivity(interior, eq), fd_dl) <= 1e-4
    big = np.abs(res.dJ_deps) > 0.01
    np.testing.assert_allclose(res.dJ_deps[big], fd_dJ[big], rtol=1e-4)


def test_cubic_costs_finite_differences(interior):
    spec = interior.with_costs(power_cost(30 * interior.costs.slope, interior.costs.intercept, 3))
    eq = solve(spec)
    assert eq.y.min() > 0.05
    assert finite_difference_check(spec, eq, h=1e-5) <= 1e-3


def test_fd_step_bounds(interior):
    eq = solve(interior)
    for h in (1e-8, 1e-2):
        with pytest.raises(ValueError):
            finite_difference_check(interior, eq, h=h)


def test_braess_interior(interior):
    eq = solve(interior)
    rep = detect_braess(interior, eq)
    assert rep.paradox_possible
    np.testing.assert_allclose(rep.worst_direction, np.eye(6)[2])
    assert rep.predicted_rate < 0
    assert social_cost_sensitivity(interior, eq)[1] > 0


def test_braess_from_gradient():
    rep = braess_from_gradient([1.0, 2.0])
    assert not rep.paradox_possible and rep.predicted_rate == 1.0
    rep = braess_from_gradient([-3.0, 1.0, -4.0])
    np.testing.assert_allclose(rep.worst_direction, [0.6, 0, 0.8])
    assert rep.predicted_rate == pytest.approx(-5.0)


def test_sign_prediction(interior):
    eq = solve(interior)
    grad = social_cost_sensitivity(interior, eq)
    base = _J(interior, np.zeros(6))
    for k in np.flatnonzero(np.abs(grad) > 0.01):
        slope = (_J(interior, 1e-3 * np.eye(6)[k]) - base) / 1e-3
        assert np.sign(slope) == np.sign(grad[k])


def test_random_games_fd_and_braess():
    for spec, eq in interior_games(21, 6):
        assert finite_difference_check(spec, eq) <= 1e-4
        grad = social_cost_sensitivity(spec, eq)
        assert detect_braess(spec, eq).paradox_possible == bool(np.any(grad < 0))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), K=st.integers(2, 8), S=st.integers(1, 4))
def test_closed_form_identities(seed, K, S):
    rng = np.random.default_rng(seed)
    S = min(S, K)
    A = rng.normal(size=(K, K))
    G = A @ A.T + K * np.eye(K)
    N = rng.normal(size=(K, S))
    J = rng.normal(size=(K, K))
    dy, dl, dd = closed_form(G, N, J)
    scale = max(1.0, np.abs(dl).max(), np.abs(J).max())
    assert np.abs(N.T @ dy).max() <= 1e-9 * max(1.0, np.abs(dy).max())
    assert np.abs(G @ dy + J - dl).max() <= 1e-9 * scale
    assert np.abs(N @ dd - dl).max() <= 1e-9 * scale


def test_closed_form_diagonal_matches_dense():
    rng = np.random.default_rng(0)
    g = rng.uniform(0.5, 2, 5)
    N = rng.normal(size=(5, 3))
    J = np.eye(5)
    for a, b in zip(closed_form(g, N, J), closed_form(np.diag(g), N, J)):
        np.testing.assert_allclose(a, b, atol=1e-12)


def test_structural_checks_ran():
    assert conftest.CHECKED["count"] > 0


def test_sweep_grid():
    np.testing.assert_array_equal(sweep_grid(0, 20), [0.0])
    g = sweep_grid(0.5, 20)
    assert g.size == 21 and g[0] == 0 and g[-1] == 0.5


def test_zero_direction_constant(interior):
    table = perturbation_sweep(interior, np.zeros(6), 0.5, 4)
    assert np.ptp(table.social_cost) == 0.0


def test_interior_sweeps(interior):
    t3 = perturbation_sweep(interior, np.eye(6)[2], 0.5, 20)
    J, ok = t3.social_cost, t3.valid
    assert ok[0] and not ok.all()
    valid = np.flatnonzero(ok)
    assert np.all(np.diff(J[valid]) < 0)
    # once arc 3 empties, raising its cost changes nothing
    assert np.ptp(J[~ok]) < 1e-12
    t2 = perturbation_sweep(interior, np.eye(6)[1], 0.5, 20)
    J, ok = t2.social_cost, t2.valid
    assert np.all(np.diff(J[ok]) > 0)
    assert np.all(np.diff(J) >= -1e-12)


def test_wheatstone_sweeps(wheatstone):
    t3 = perturbation_sweep(wheatstone, np.eye(6)[2], 0.5, 20)
    assert not t3.valid.any()
    assert np.ptp(t3.social_cost) < 1e-12
    t2 = perturbation_sweep(wheatstone, np.eye(6)[1], 0.5, 20)
    assert np.all(np.diff(t2.social_cost) > 0)


def test_sweep_rejects_bad_input(interior):
    with pytest.raises(ValueError):
        perturbation_sweep(interior, -np.eye(6)[0], 0.5, 20)
    with pytest.raises(ValueError):
        perturbation_sweep(interior, np.eye(6)[0], 0.5, 1)


def test_sweep_threads_match_serial(interior):
    a = perturbation_sweep(interior, np.eye(6)[2], 0.3, 6, workers=1)
    b = perturbation_sweep(interior, np.eye(6)[2], 0.3, 6, workers=4)
    np.testing.assert_array_equal(a.social_cost, b.social_cost)
