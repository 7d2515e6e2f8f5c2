import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import linalg as sla

from stiefel_sketch.errors import DefinitenessError, DimensionError
from stiefel_sketch.linops import (
    CrossOperator,
    DataMatrix,
    GramOperator,
    ProductCounter,
    generalized_sym_eig,
    gram_apply,
    solve_small_lyapunov,
    spd_inv_sqrt,
    spd_sqrt,
    thin_qr,
    triangular_solve,
)

from conftest import random_spd


def test_gram_identity():
    op = GramOperator(np.eye(2), 0.0)
    np.testing.assert_array_equal(gram_apply(op, np.eye(2)), np.eye(2))


def test_gram_diagonal_with_ridge():
    op = GramOperator(np.array([[1.0, 0], [0, 2]]), 1.0)
    np.testing.assert_allclose(op.apply(np.eye(2)), np.diag([2.0, 5.0]))


def test_gram_matches_dense(rng):
    Z = rng.standard_normal((20, 4))
    V = rng.standard_normal((4, 2))
    op = GramOperator(Z, 0.3)
    dense = Z.T @ Z + 0.3 * np.eye(4)
    np.testing.assert_allclose(op.apply(V), dense @ V, rtol=1e-12)
    np.testing.assert_allclose(op.quad(V), V.T @ dense @ V, rtol=1e-12)
    W = rng.standard_normal((4, 2))
    np.testing.assert_allclose(op.quad(V, W), V.T @ dense @ W, rtol=1e-12)
    np.testing.assert_allclose(op.dense(), dense)


def test_gram_rejects_bad_input():
    with pytest.raises(DimensionError):
        GramOperator(np.eye(3), -1.0)
    with pytest.raises(DimensionError):
        GramOperator(np.eye(3)).apply(np.ones((2, 1)))
    with pytest.raises(DimensionError):
        GramOperator(np.array([[np.nan, 1.0]]))


def test_product_counting_and_memo(rng):
    c = ProductCounter()
    D = DataMatrix(rng.standard_normal((30, 5)), c)
    V = rng.standard_normal((5, 2))
    W = rng.standard_normal((5, 2))
    D.mul(V)
    D.mul(V)
    assert c.count == 1
    D.mul(W)
    D.mul(V)  # still memoized: two entries
    assert c.count == 2
    D.tmul(rng.standard_normal((30, 2)))
    assert c.count == 3
    c.reset()
    assert c.count == 0


def test_memo_sees_content_changes(rng):
    D = DataMatrix(rng.standard_normal((10, 3)))
    V = rng.standard_normal((3, 1))
    a = D.mul(V).copy()
    V[0, 0] += 1.0
    assert not np.allclose(D.mul(V), a)


def test_cross_operator(rng):
    X = rng.standard_normal((15, 4))
    Y = rng.standard_normal((15, 3))
    op = CrossOperator(X, Y)
    U = rng.standard_normal((4, 2))
    V = rng.standard_normal((3, 2))
    np.testing.assert_allclose(op.apply(V), X.T @ Y @ V)
    np.testing.assert_allclose(op.apply_t(U), Y.T @ X @ U)
    np.testing.assert_allclose(op.bilinear(U, V), U.T @ X.T @ Y @ V)
    with pytest.raises(DimensionError):
        CrossOperator(X, Y[:-1])


def test_lyapunov_identity_coefficient(rng):
    E = rng.standard_normal((3, 3))
    E = E + E.T
    np.testing.assert_allclose(solve_small_lyapunov(np.eye(3), E), E / 2, atol=1e-14)


def test_lyapunov_kronecker_oracle():
    C = np.diag([1.0, 2.0])
    E = np.ones((2, 2))
    # (I kron C + C kron I) vec(S) = vec(E)
    K = np.kron(np.eye(2), C) + np.kron(C, np.eye(2))
    S_ref = np.linalg.solve(K, E.ravel(order="F")).reshape(2, 2, order="F")
    S = solve_small_lyapunov(C, E)
    np.testing.assert_allclose(S, S_ref, atol=1e-15)
    np.testing.assert_allclose(S, [[1 / 2, 1 / 3], [1 / 3, 1 / 4]], atol=1e-15)


@given(st.integers(1, 6), st.integers(0, 2**31 - 1))
def test_lyapunov_residual_property(p, seed):
    rng = np.random.default_rng(seed)
    C = random_spd(rng, p, 100.0)
    E = rng.standard_normal((p, p))
    E = E + E.T
    S = solve_small_lyapunov(C, E)
    assert np.abs(S - S.T).max() == 0.0
    assert np.linalg.norm(C @ S + S @ C - E) <= 1e-12 * max(1.0, np.linalg.norm(E)) * 100
    np.testing.assert_allclose(S, sla.solve_continuous_lyapunov(C, E), atol=1e-10)


def test_lyapunov_rejects_indefinite():
    with pytest.raises(DefinitenessError):
        solve_small_lyapunov(np.diag([1.0, -1.0]), np.eye(2))


def test_inv_sqrt_examples(rng):
    np.testing.assert_allclose(spd_inv_sqrt(np.eye(3)), np.eye(3))
    np.testing.assert_allclose(spd_inv_sqrt(np.diag([4.0, 9.0])), np.diag([0.5, 1 / 3]))
    A = random_spd(rng, 4, 50.0)
    W = spd_inv_sqrt(A)
    np.testing.assert_allclose(W @ A @ W, np.eye(4), atol=1e-10)
    np.testing.assert_allclose(spd_sqrt(A) @ spd_sqrt(A), A, atol=1e-10)
    with pytest.raises(DefinitenessError):
        spd_inv_sqrt(-np.eye(2))


def test_thin_qr():
    Q, R = thin_qr(np.eye(3))
    np.testing.assert_allclose(Q, np.eye(3))
    np.testing.assert_allclose(R, np.eye(3))
    rng = np.random.default_rng(0)
    O, _ = np.linalg.qr(rng.standard_normal((10, 3)))
    np.testing.assert_allclose(thin_qr(O)[1], np.eye(3), atol=1e-12)
    A = rng.standard_normal((10, 3))
    Q, R = thin_qr(A)
    assert np.linalg.norm(Q @ R - A) <= 1e-12
    assert np.all(np.diag(R) >= 0)
    with pytest.raises(DimensionError):
        thin_qr(np.ones((2, 3)))


def test_generalized_eig_against_scipy(rng):
    A = rng.standard_normal((5, 5))
    A = A + A.T
    B = random_spd(rng, 5, 20.0)
    w, V = generalized_sym_eig(A, B)
    np.testing.assert_allclose(w, sla.eigh(A, B, eigvals_only=True), rtol=1e-10, atol=1e-12)
    np.testing.assert_allclose(V.T @ B @ V, np.eye(5), atol=1e-10)
    np.testing.assert_allclose(A @ V, B @ V * w, atol=1e-9)


def test_triangular_solve(rng):
    R = np.triu(rng.standard_normal((4, 4))) + 4 * np.eye(4)
    V = rng.standard_normal((4, 2))
    np.testing.assert_allclose(R @ triangular_solve(R, V), V, atol=1e-12)
    np.testing.assert_allclose(R.T @ triangular_solve(R, V, trans=True), V, atol=1e-12)
