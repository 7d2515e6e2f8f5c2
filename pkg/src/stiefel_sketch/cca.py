"""Regularized CCA on a product of two generalized Stiefel manifolds.

With ``Sxx = X^T X + lx I``, ``Syy = Y^T Y + ly I`` and ``Sxy = X^T Y`` the
top-``p`` canonical pairs minimize

    f(U, V) = -Tr(U^T Sxy V N),   U^T Sxx U = I,  V^T Syy V = I,

for a diagonal ``N`` with strictly decreasing positive entries.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DimensionError
from .geometry import GenStiefelGeometry, ProductGeometry
from .linops import CrossOperator, DataMatrix, GramOperator, ProductCounter, as_matrix, spd_inv_sqrt, sym
from .optim import ConvergenceTrace, Problem, SolverOptions, solve
from .sketching import (
    CountSketchTransform,
    Preconditioner,
    build_dominant_subspace_preconditioner,
    build_exact_preconditioner,
    effective_dimension,
    factor_from_stack,
    recommended_sketch_size,
    sketch_apply_compact,
)


def default_mu(p):
    """``mu_i = 1 + (p - i) / p``, ``i = 1..p``."""
    return 1.0 + (p - np.arange(1, p + 1)) / p


def check_mu(mu, p):
    mu = np.asarray(mu, dtype=np.float64).ravel()
    if mu.size != p:
        raise DimensionError(f"need {p} weights, got {mu.size}")
    if np.any(mu <= 0) or np.any(np.diff(mu) >= 0):
        raise DimensionError(f"weights must be positive and strictly decreasing, got {mu.tolist()}")
    return mu


class CcaProblem:
    """Two views, their ridge terms, the target count and the weights.

    Data products are counted in ``self.counter``. The operators memoize
    recent products, so one instance should not be shared between threads;
    :meth:`fresh` returns an independent copy over the same arrays.
    """

    def __init__(self, X, Y, lambda_x=0.0, lambda_y=0.0, p=1, mu=None):
        X = as_matrix(X, "X")
        Y = as_matrix(Y, "Y")
        if X.shape[0] != Y.shape[0]:
            raise DimensionError(f"views have different row counts: {X.shape[0]} vs {Y.shape[0]}")
        if not 1 <= p <= min(X.shape[1], Y.shape[1]):
            raise DimensionError(f"need 1 <= p <= min(dx, dy), got p={p}")
        if lambda_x < 0 or lambda_y < 0:
            raise DimensionError("regularizers must be nonnegative")
        self.X = X
        self.Y = Y
        self.lambda_x = float(lambda_x)
        self.lambda_y = float(lambda_y)
        self.p = int(p)
        self.mu = check_mu(default_mu(p) if mu is None else mu, p)
        self.counter = ProductCounter()
        self.Xd = DataMatrix(X, self.counter, "X")
        self.Yd = DataMatrix(Y, self.counter, "Y")
        self.Sxx = GramOperator(self.Xd, self.lambda_x)
        self.Syy = GramOperator(self.Yd, self.lambda_y)
        self.Sxy = CrossOperator(self.Xd, self.Yd)

    @property
    def dx(self):
        return self.X.shape[1]

    @property
    def dy(self):
        return self.Y.shape[1]

    @property
    def n(self):
        return self.X.shape[0]

    def fresh(self):
        return CcaProblem(self.X, self.Y, self.lambda_x, self.lambda_y, self.p, self.mu)

    def split(self, Z):
        Z = np.asarray(Z, dtype=np.float64)
        if Z.shape != (self.dx + self.dy, self.p):
            raise DimensionError(f"expected a {(self.dx + self.dy, self.p)} point, got {Z.shape}")
        return Z[: self.dx], Z[self.dx :]

    def geometry(self, Mx=None, My=None):
        Mx = Mx or Preconditioner.identity(self.dx)
        My = My or Preconditioner.identity(self.dy)
        return ProductGeometry(
            GenStiefelGeometry(self.Sxx, Mx, self.p), GenStiefelGeometry(self.Syy, My, self.p)
        )

    def as_problem(self, geometry):
        return Problem(
            geometry,
            lambda Z: cca_cost(self, Z),
            lambda Z: cca_euclidean_grad(self, Z),
            lambda Z, xi: cca_euclidean_hess_apply(self, Z, xi),
            self.counter,
        )


@dataclass
class CcaSolution:
    U: np.ndarray
    V: np.ndarray
    correlations: np.ndarray
    trace: Optional[ConvergenceTrace] = None
    metadata: dict = field(default_factory=dict)

    @property
    def Z(self):
        return np.vstack([self.U, self.V])

    def to_dict(self):
        out = {
            "correlations": [float(c) for c in self.correlations],
            "dims": {"dx": int(self.U.shape[0]), "dy": int(self.V.shape[0]), "p": int(self.U.shape[1])},
            "metadata": self.metadata,
        }
        if self.trace is not None:
            out["iterations"] = self.trace.n_iters
            out["matvecs"] = self.trace.matvecs[-1] if self.trace.matvecs else 0
            out["status"] = self.trace.status
        return out


def cca_cost(prob, Z):
    """``-sum_i mu_i (U^T X^T Y V)_ii``."""
    U, V = prob.split(Z)
    XU = prob.Xd.mul(U)
    YV = prob.Yd.mul(V)
    return -float(np.sum(prob.mu * np.sum(XU * YV, axis=0)))


def cca_euclidean_grad(prob, Z):
    """``-[Sxy V N; Sxy^T U N]``."""
    U, V = prob.split(Z)
    gU = prob.Xd.tmul(prob.Yd.mul(V))
    gV = prob.Yd.tmul(prob.Xd.mul(U))
    return -np.vstack([gU, gV]) * prob.mu


def cca_euclidean_hess_apply(prob, Z, xi):
    """``-[Sxy xi_V N; Sxy^T xi_U N]``; the cost is bilinear so ``Z`` drops out."""
    return cca_euclidean_grad(prob, xi)


def canonical_svd(X, Y, lambda_x=0.0, lambda_y=0.0):
    """Dense oracle: SVD of ``Sxx^{-1/2} Sxy Syy^{-1/2}``.

    Returns ``Wx, Ut, sigma, Vt_T, Wy`` so that the canonical directions are
    ``Wx @ Ut`` and ``Wy @ Vt_T`` with correlations ``sigma`` (all
    ``min(dx, dy)`` of them, descending).
    """
    X = as_matrix(X, "X")
    Y = as_matrix(Y, "Y")
    Wx = spd_inv_sqrt(sym(X.T @ X) + lambda_x * np.eye(X.shape[1]))
    Wy = spd_inv_sqrt(sym(Y.T @ Y) + lambda_y * np.eye(Y.shape[1]))
    R = Wx @ (X.T @ Y) @ Wy
    Ut, sigma, Vt = np.linalg.svd(R, full_matrices=True)
    return Wx, Ut, sigma, Vt.T, Wy


def exact_cca(X, Y, lambda_x=0.0, lambda_y=0.0, p=1):
    """Top-``p`` canonical pairs by a dense SVD. For oracles and warm starts."""
    Wx, Ut, sigma, Vs, Wy = canonical_svd(X, Y, lambda_x, lambda_y)
    if p > sigma.size:
        raise DimensionError(f"p={p} exceeds min(dx, dy)={sigma.size}")
    U = Wx @ Ut[:, :p]
    V = Wy @ Vs[:, :p]
    return CcaSolution(U, V, sigma[:p].copy(), None, {"solver": "exact"})


def canonicalize_cca(prob, U, V):
    """Sort columns by ``diag(U^T Sxy V)`` and flip ``V`` columns to make it nonnegative."""
    d = np.sum(prob.Xd.mul(U) * prob.Yd.mul(V), axis=0)
    signs = np.where(d < 0, -1.0, 1.0)
    V = V * signs
    d = d * signs
    order = np.argsort(-d, kind="stable")
    return U[:, order], V[:, order], d[order]


def cca_preconditioners(prob, kind="count_sketch", s=None, seed=0, k=None, transform=None):
    """Metric factors for both views.

    ``kind`` is one of ``identity``, ``exact``, ``count_sketch`` or
    ``dominant_subspace``. For ``count_sketch`` a single transform sketches
    both views; the sketched views are returned for the warm start.

    Returns
    -------
    (Mx, My), (SX, SY) or None
    """
    if kind == "identity":
        return (Preconditioner.identity(prob.dx), Preconditioner.identity(prob.dy)), None
    if kind == "exact":
        return (
            build_exact_preconditioner(prob.X, prob.lambda_x),
            build_exact_preconditioner(prob.Y, prob.lambda_y),
        ), None
    if kind == "dominant_subspace":
        if k is None:
            raise DimensionError("dominant_subspace needs k")
        return (
            build_dominant_subspace_preconditioner(prob.X, prob.lambda_x, min(k, prob.dx)),
            build_dominant_subspace_preconditioner(prob.Y, prob.lambda_y, min(k, prob.dy)),
        ), None
    if kind != "count_sketch":
        raise DimensionError(f"unknown preconditioner {kind!r}")
    if transform is None:
        if s is None or s < max(prob.dx, prob.dy):
            raise DimensionError(f"sketch size must be at least max(dx, dy)={max(prob.dx, prob.dy)}, got {s}")
        transform = CountSketchTransform.random(prob.n, s, seed)
    SX = sketch_apply_compact(transform, prob.X)
    SY = sketch_apply_compact(transform, prob.Y)
    meta = {"s": transform.s, "seed": transform.seed}
    Mx = factor_from_stack(SX, prob.lambda_x, "count_sketch", dict(meta, **{"lambda": prob.lambda_x}))
    My = factor_from_stack(SY, prob.lambda_y, "count_sketch", dict(meta, **{"lambda": prob.lambda_y}))
    return (Mx, My), (SX, SY)


def cca_sketch_size(prob, delta=0.1):
    """Sketch size for two views: ``40 max(s_x, s_y)^2 / delta``, at least ``max(dx, dy)``."""
    s_lam = max(effective_dimension(prob.X, prob.lambda_x), effective_dimension(prob.Y, prob.lambda_y))
    return recommended_sketch_size(s_lam, delta, max(prob.dx, prob.dy), c=40)


def solve_cca(prob, Mx=None, My=None, x0=None, solver="cg", options=None, init_seed=0):
    """Run a Riemannian solver with the given metrics from ``x0`` (random if None)."""
    G = prob.geometry(Mx, My)
    if x0 is None:
        x0 = G.random_point(init_seed)
    problem = prob.as_problem(G)
    Z, trace = solve(problem, x0, solver, options)
    U, V, corr = canonicalize_cca(prob, *prob.split(Z))
    return CcaSolution(U, V, corr, trace, {"solver": solver})


def solve_cca_sketched(
    prob,
    s=None,
    delta=0.1,
    seed=0,
    options=None,
    solver="cg",
    warm_start=True,
    transform=None,
    init_seed=None,
):
    """Sketch-preconditioned Riemannian CCA with a sketched warm start.

    One CountSketch ``S`` is applied to both views. The metrics are
    ``(SX)^T SX + lx I`` and ``(SY)^T SY + ly I``. The starting point is the
    exact CCA of ``(SX, SY)``, pulled onto the true constraint set; with
    ``warm_start=False`` a random point drawn from ``init_seed`` (default
    ``seed``) is used instead.
    """
    if transform is None and s is None:
        s = cca_sketch_size(prob, delta)
    (Mx, My), (SX, SY) = cca_preconditioners(prob, "count_sketch", s, seed, transform=transform)
    G = prob.geometry(Mx, My)
    if warm_start:
        ws = exact_cca(SX, SY, prob.lambda_x, prob.lambda_y, prob.p)
        x0 = G.b_orthonormalize(np.vstack([ws.U, ws.V]))
    else:
        x0 = G.random_point(seed if init_seed is None else init_seed)
    problem = prob.as_problem(G)
    Z, trace = solve(problem, x0, solver, options)
    U, V, corr = canonicalize_cca(prob, *prob.split(Z))
    meta = {"solver": solver, "s": int(Mx.metadata["s"]), "seed": Mx.metadata["seed"], "warm_start": bool(warm_start)}
    trace.metadata.update(meta)
    return CcaSolution(U, V, corr, trace, meta)


def kappa_star_cca(sigma, mu):
    """Condition number of the CCA Hessian at the optimum under ``M = Sigma``.

    Parameters
    ----------
    sigma : array_like
        ``sigma_1 > ... > sigma_{p+1} >= 0``.
    mu : array_like
        ``p`` strictly decreasing positive weights.
    """
    mu = np.asarray(mu, dtype=np.float64).ravel()
    p = mu.size
    mu = check_mu(mu, p)
    s = np.asarray(sigma, dtype=np.float64).ravel()
    if s.size != p + 1:
        raise DimensionError(f"need p+1={p + 1} correlations, got {s.size}")
    if s[-1] < 0 or np.any(np.diff(s) >= 0):
        raise DimensionError("correlations must be strictly decreasing and nonnegative")
    num = mu[0] * (s[0] + s[p])
    den = mu[p - 1] * (s[p - 1] - s[p])
    if p > 1:
        num = max(num, 0.5 * (mu[0] + mu[1]) * (s[0] + s[1]))
        den = min(den, np.min(0.5 * (mu[:-1] - mu[1:]) * (s[: p - 1] - s[1:p])))
    return float(num / den)
