"""Shared builders and independent oracles for the test suite."""

import numpy as np

from stiefel_sketch.geometry import GenStiefelGeometry
from stiefel_sketch.linops import GramOperator
from stiefel_sketch.sketching import Preconditioner


def random_geometry(rng, d, p, n=None, lam=0.1, metric="random"):
    n = n or d + 5
    Z = rng.standard_normal((n, d)) * np.logspace(0, 1, d)
    B = GramOperator(Z, lam)
    if metric == "identity":
        M = Preconditioner.identity(d)
    elif metric == "exact":
        M = Preconditioner.from_dense(B.dense(), "exact")
    else:
        A = rng.standard_normal((d + 3, d))
        M = Preconditioner.from_dense(A.T @ A + 0.1 * np.eye(d))
    return GenStiefelGeometry(B, M, p)


def kkt_projection(B, M, X, V):
    """Metric projection onto {xi : sym(X^T B xi) = 0} by a dense KKT solve.

    Minimizes vec(xi - V)^T (I kron M) vec(xi - V) subject to the p(p+1)/2
    linear constraints, independently of the Lyapunov route.
    """
    d, p = X.shape
    BX = B @ X
    rows = []
    for i in range(p):
        for j in range(i, p):
            # (X^T B xi)_ij + (X^T B xi)_ji as a linear functional of vec(xi) (column-major)
            g = np.zeros((d, p))
            g[:, j] += BX[:, i]
            g[:, i] += BX[:, j]
            rows.append(g.ravel(order="F"))
    A = np.array(rows)
    H = np.kron(np.eye(p), M)
    m = A.shape[0]
    K = np.block([[H, A.T], [A, np.zeros((m, m))]])
    rhs = np.concatenate([H @ V.ravel(order="F"), np.zeros(m)])
    sol = np.linalg.solve(K, rhs)
    return sol[: d * p].reshape(d, p, order="F")


def central_difference(f, X, D, h=1e-5):
    return (f(X + h * D) - f(X - h * D)) / (2 * h)
