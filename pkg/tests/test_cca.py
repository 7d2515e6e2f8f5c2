import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.linalg import subspace_angles

from stiefel_sketch.cca import (
    CcaProblem,
    cca_cost,
    cca_euclidean_grad,
    cca_euclidean_hess_apply,
    exact_cca,
    kappa_star_cca,
    solve_cca_sketched,
)
from stiefel_sketch.errors import DefinitenessError, DimensionError
from stiefel_sketch.optim import SolverOptions
from stiefel_sketch.sketching import CountSketchTransform, Preconditioner, build_exact_preconditioner

from helpers import central_difference


def _views(rng, n=60, dx=6, dy=5):
    L = rng.standard_normal((n, 2))
    X = np.hstack([L, rng.standard_normal((n, dx - 2))]) @ rng.standard_normal((dx, dx))
    Y = np.hstack([L + 0.5 * rng.standard_normal((n, 2)), rng.standard_normal((n, dy - 2))]) @ rng.standard_normal((dy, dy))
    return X, Y


def _orthogonal_views(rng, n=30):
    Q, _ = np.linalg.qr(rng.standard_normal((n, 7)))
    return Q[:, :4] @ rng.standard_normal((4, 4)), Q[:, 4:] @ rng.standard_normal((3, 3))


def test_orthogonal_views_are_uncorrelated(rng):
    X, Y = _orthogonal_views(rng)
    prob = CcaProblem(X, Y, 0.0, 0.0, 2)
    Z = rng.standard_normal((7, 2))
    assert abs(cca_cost(prob, Z)) <= 1e-12
    assert np.abs(cca_euclidean_grad(prob, Z)).max() <= 1e-12
    np.testing.assert_allclose(exact_cca(X, Y, 0, 0, 2).correlations, 0, atol=1e-12)
    sol = solve_cca_sketched(prob, s=20, seed=0)
    np.testing.assert_allclose(sol.correlations, 0, atol=1e-10)
    assert abs(sol.trace.costs[-1]) <= 1e-12


def test_cost_at_optimum(rng):
    X, Y = _views(rng)
    mu = [3.0, 2.75, 2.0]
    prob = CcaProblem(X, Y, 0.1, 0.2, 3, mu)
    ex = exact_cca(X, Y, 0.1, 0.2, 3)
    assert cca_cost(prob, ex.Z) == pytest.approx(-np.dot(mu, ex.correlations), rel=1e-12)


def test_self_correlation(rng):
    X = rng.standard_normal((20, 3))
    prob = CcaProblem(X, X, 0, 0, 1, [1.5])
    ex = exact_cca(X, X, 0, 0, 3)
    np.testing.assert_allclose(ex.correlations, 1.0, atol=1e-12)
    assert cca_cost(prob, np.vstack([ex.U[:, :1], ex.V[:, :1]])) == pytest.approx(-1.5, rel=1e-12)


def test_correlations_match_principal_angles(rng):
    X, Y = _views(rng)
    ex = exact_cca(X, Y, 0, 0, 5)
    np.testing.assert_allclose(ex.correlations, np.sort(np.cos(subspace_angles(X, Y)))[::-1], atol=1e-10)


def test_exact_solution_invariants(rng):
    X, Y = _views(rng, 50, 6, 5)
    ex = exact_cca(X, Y, 0, 0, 3)
    np.testing.assert_allclose(ex.U.T @ X.T @ X @ ex.U, np.eye(3), atol=1e-10)
    np.testing.assert_allclose(ex.V.T @ Y.T @ Y @ ex.V, np.eye(3), atol=1e-10)
    C = ex.U.T @ X.T @ Y @ ex.V
    np.testing.assert_allclose(C, np.diag(ex.correlations), atol=1e-10)
    assert np.all(np.diff(ex.correlations) <= 0) and np.all(ex.correlations >= 0)


def test_exact_rejects_singular_unregularized(rng):
    X = np.ones((10, 2))
    with pytest.raises(DefinitenessError):
        exact_cca(X, rng.standard_normal((10, 2)), 0, 0, 1)


@given(st.integers(0, 2**40))
def test_gradient_and_hessian_finite_differences(seed):
    rng = np.random.default_rng(seed)
    X, Y = _views(rng, 40, 5, 4)
    prob = CcaProblem(X, Y, 0.5, 0.5, 2, [2.0, 1.0])
    Z = rng.standard_normal((9, 2))
    D = rng.standard_normal((9, 2))
    g = cca_euclidean_grad(prob, Z)
    fd = central_difference(lambda A: cca_cost(prob, A), Z, D)
    assert np.sum(g * D) == pytest.approx(fd, rel=1e-5, abs=1e-9)
    xi = rng.standard_normal((9, 2))
    h = cca_euclidean_hess_apply(prob, Z, xi)
    fdg = central_difference(lambda A: cca_euclidean_grad(prob, A), Z, xi)
    assert np.linalg.norm(h - fdg) <= 1e-4 * np.linalg.norm(h)
    # linear in the direction
    a, b = 1.7, -0.3
    lin = cca_euclidean_hess_apply(prob, Z, a * xi + b * D) - a * h - b * cca_euclidean_hess_apply(prob, Z, D)
    assert np.linalg.norm(lin) <= 1e-12 * np.linalg.norm(h) * 10
    assert np.abs(cca_euclidean_hess_apply(prob, Z, np.zeros_like(Z))).max() == 0


def test_gradient_vanishes_at_exact_solution_under_any_metric(rng):
    X, Y = _views(rng)
    prob = CcaProblem(X, Y, 0.1, 0.1, 3)
    ex = exact_cca(X, Y, 0.1, 0.1, 3)
    eg = cca_euclidean_grad(prob, ex.Z)
    scale = np.linalg.norm(X.T @ Y, 2)
    for Mx, My in [
        (None, None),
        (build_exact_preconditioner(X, 0.1), build_exact_preconditioner(Y, 0.1)),
        (Preconditioner.from_dense(np.diag(rng.uniform(1, 5, 6))), Preconditioner.from_dense(np.diag(rng.uniform(1, 5, 5)))),
    ]:
        G = prob.geometry(Mx, My)
        assert G.norm(ex.Z, G.egrad2rgrad(ex.Z, eg)) <= 1e-8 * scale


def test_kappa_star_examples():
    assert kappa_star_cca([0.8, 0.2], [5.0]) == pytest.approx(10 / 6, rel=1e-14)
    assert kappa_star_cca([0.9, 0.5, 0.3, 0.1], [3, 2.75, 2]) == pytest.approx(80.5, rel=1e-12)
    with pytest.raises(DimensionError):
        kappa_star_cca([0.5, 0.5], [1.0])
    with pytest.raises(DimensionError):
        kappa_star_cca([0.5, 0.6], [1.0])
    with pytest.raises(DimensionError):
        kappa_star_cca([0.9, 0.5], [1.0, 2.0])


def test_problem_validation(rng):
    X, Y = _views(rng)
    with pytest.raises(DimensionError):
        CcaProblem(X, Y[:-1])
    with pytest.raises(DimensionError):
        CcaProblem(X, Y, p=6)
    with pytest.raises(DimensionError):
        CcaProblem(X, Y, p=2, mu=[1.0, 1.0])
    with pytest.raises(DimensionError):
        CcaProblem(X, Y, -1.0)
    prob = CcaProblem(X, Y, p=3)
    np.testing.assert_allclose(prob.mu, [1.0, 1 + 1 / 3, 1 + 2 / 3][::-1])


def test_full_sketch_warm_start_is_optimal(rng):
    X, Y = _views(rng, 80)
    prob = CcaProblem(X, Y, 0.0, 0.0, 2, [2.0, 1.0])
    sol = solve_cca_sketched(prob, transform=CountSketchTransform.identity(80))
    assert sol.trace.n_iters <= 3
    np.testing.assert_allclose(sol.correlations, exact_cca(X, Y, 0, 0, 2).correlations, atol=1e-9)


def test_sketched_solution_matches_oracle(rng):
    X, Y = _views(rng, 400, 8, 6)
    prob = CcaProblem(X, Y, 0.01, 0.01, 3, [3.0, 2.75, 2.0])
    sol = solve_cca_sketched(prob, s=60, seed=2, options=SolverOptions(grad_tol=1e-9))
    ex = exact_cca(X, Y, 0.01, 0.01, 3)
    assert sol.trace.converged
    np.testing.assert_allclose(sol.correlations, ex.correlations, atol=1e-6)
    np.testing.assert_allclose(sol.U.T @ prob.Sxx.dense() @ sol.U, np.eye(3), atol=1e-6)
    np.testing.assert_allclose(sol.V.T @ prob.Syy.dense() @ sol.V, np.eye(3), atol=1e-6)
    C = sol.U.T @ X.T @ Y @ sol.V
    assert np.abs(C - np.diag(np.diag(C))).max() <= 1e-6
    assert np.all(np.diag(C) >= 0) and np.all(np.diff(np.diag(C)) <= 0)
    d = sol.to_dict()
    assert d["dims"] == {"dx": 8, "dy": 6, "p": 3} and d["status"] == "gradient_converged"


def test_weight_scaling_leaves_solution_unchanged(rng):
    X, Y = _views(rng, 300, 6, 5)
    a = solve_cca_sketched(CcaProblem(X, Y, 0.01, 0.01, 2, [2.0, 1.0]), s=50, seed=1)
    b = solve_cca_sketched(CcaProblem(X, Y, 0.01, 0.01, 2, [20.0, 10.0]), s=50, seed=1, warm_start=False)
    np.testing.assert_allclose(np.abs(a.U), np.abs(b.U), atol=1e-5 * np.abs(a.U).max())
    np.testing.assert_allclose(a.correlations, b.correlations, atol=1e-8)


def test_sketch_size_precondition(rng):
    X, Y = _views(rng)
    with pytest.raises(DimensionError):
        solve_cca_sketched(CcaProblem(X, Y, 0, 0, 1), s=4)


@pytest.mark.parametrize("s", [40, 100, 400])
def test_products_per_iteration_stay_in_envelope(s):
    from stiefel_sketch.data import synthesize_cca

    X, Y = synthesize_cca(3000, 20, 15, [0.9, 0.7, 0.5, 0.3], seed=0, cond=30)
    sol = solve_cca_sketched(CcaProblem(X, Y, 0.0, 0.0, 3), s=s, warm_start=False, init_seed=1)
    tr = sol.trace
    per_iter = (tr.matvecs[-1] - tr.matvecs[0]) / tr.n_iters
    assert 4 <= per_iter <= 30
