"""Regularized Fisher discriminant analysis on one generalized Stiefel manifold.

The weights minimize ``-1/2 Tr(W^T S_B W N)`` subject to
``W^T (S_w + lam I) W = I``. Both scatter matrices are handled through
their factors ``S_w = Xh^T Xh`` and ``S_B = Yh^T Yh``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .cca import check_mu, default_mu
from .errors import DimensionError
from .geometry import GenStiefelGeometry
from .linops import DataMatrix, GramOperator, ProductCounter, as_matrix, generalized_sym_eig, sym
from .optim import Problem, solve
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


@dataclass
class ScatterFactors:
    Xhat: np.ndarray
    Yhat: np.ndarray
    class_means: np.ndarray
    global_mean: np.ndarray
    labels: np.ndarray  # remapped to 1..l
    classes: np.ndarray  # original label values, in remapped order

    @property
    def n_classes(self):
        return self.Yhat.shape[0]


def encode_labels(labels):
    """Map arbitrary label values to ``1..l`` (sorted order); returns ``(codes, classes)``."""
    labels = np.asarray(labels).ravel()
    classes, codes = np.unique(labels, return_inverse=True)
    return codes + 1, classes


def compute_scatter_factors(X, labels, n_classes=None):
    """Factors of the within- and between-class scatter.

    Row ``i`` of ``Xhat`` is ``x_i - m_{y_i}``; row ``k`` of ``Yhat`` is
    ``sqrt(n_k) (m_k - m)``.

    If ``n_classes`` is given, ``labels`` must already be codes ``1..l`` and
    every class must occur.
    """
    X = as_matrix(X, "X")
    labels = np.asarray(labels).ravel()
    if labels.size != X.shape[0]:
        raise DimensionError(f"{labels.size} labels for {X.shape[0]} rows")
    if n_classes is not None:
        codes = labels.astype(np.int64)
        if codes.min() < 1 or codes.max() > n_classes:
            raise DimensionError(f"labels must lie in 1..{n_classes}")
        counts = np.bincount(codes - 1, minlength=n_classes)
        if np.any(counts == 0):
            raise DimensionError(f"empty classes: {(np.flatnonzero(counts == 0) + 1).tolist()}")
        classes = np.arange(1, n_classes + 1)
    else:
        codes, classes = encode_labels(labels)
        counts = np.bincount(codes - 1)
    idx = codes - 1
    l = counts.size
    means = np.zeros((l, X.shape[1]))
    np.add.at(means, idx, X)
    means /= counts[:, None]
    m = X.mean(axis=0)
    Xhat = X - means[idx]
    Yhat = np.sqrt(counts)[:, None] * (means - m)
    return ScatterFactors(Xhat, Yhat, means, m, codes, classes)


class FdaProblem:
    """Labeled data, ridge term, target count and weights.

    ``p`` larger than ``l - 1`` is truncated with a warning, since the
    between-class scatter has rank at most ``l - 1``.
    """

    def __init__(self, X, labels, lam=0.0, p=1, mu=None, factors=None):
        X = as_matrix(X, "X")
        sf = factors if factors is not None else compute_scatter_factors(X, labels)
        l = sf.n_classes
        if l < 2:
            raise DimensionError("FDA needs at least two classes")
        if p > l - 1:
            warnings.warn(f"p={p} exceeds l-1={l - 1}; truncating", RuntimeWarning, stacklevel=2)
            p = l - 1
            if mu is not None:
                mu = np.asarray(mu, dtype=np.float64)[:p]
        if not 1 <= p <= X.shape[1]:
            raise DimensionError(f"need 1 <= p <= d, got p={p}")
        if lam < 0:
            raise DimensionError("regularizer must be nonnegative")
        self.X = X
        self.factors = sf
        self.lam = float(lam)
        self.p = int(p)
        self.mu = check_mu(default_mu(p) if mu is None else mu, p)
        self.counter = ProductCounter()
        self.Xh = DataMatrix(sf.Xhat, self.counter, "Xhat")
        self.Yh = DataMatrix(sf.Yhat, self.counter, "Yhat")
        self.Sw = GramOperator(self.Xh, self.lam)

    @property
    def d(self):
        return self.X.shape[1]

    @property
    def n(self):
        return self.X.shape[0]

    def fresh(self):
        return FdaProblem(self.X, None, self.lam, self.p, self.mu, factors=self.factors)

    def geometry(self, M=None):
        return GenStiefelGeometry(self.Sw, M or Preconditioner.identity(self.d), self.p)

    def as_problem(self, geometry):
        return Problem(
            geometry,
            lambda W: fda_cost(self, W),
            lambda W: fda_euclidean_grad(self, W),
            lambda W, xi: fda_euclidean_hess_apply(self, W, xi),
            self.counter,
        )


def _check_w(prob, W):
    W = np.asarray(W, dtype=np.float64)
    if W.shape != (prob.d, prob.p):
        raise DimensionError(f"expected a {(prob.d, prob.p)} matrix, got {W.shape}")
    return W


def fda_cost(prob, W):
    """``-1/2 sum_i mu_i ||Yh w_i||^2``."""
    YW = prob.Yh.mul(_check_w(prob, W))
    return -0.5 * float(np.sum(prob.mu * np.sum(YW * YW, axis=0)))


def fda_euclidean_grad(prob, W):
    """``-Yh^T (Yh W) N``."""
    return -prob.Yh.tmul(prob.Yh.mul(_check_w(prob, W))) * prob.mu


def fda_euclidean_hess_apply(prob, W, xi):
    """``-Yh^T (Yh xi) N``."""
    return fda_euclidean_grad(prob, xi)


def _canonical_signs(W):
    """Flip columns so that their first non-negligible entry is positive."""
    W = W.copy()
    for j in range(W.shape[1]):
        col = W[:, j]
        big = np.flatnonzero(np.abs(col) > 1e-12 * max(np.abs(col).max(), 1e-300))
        if big.size and col[big[0]] < 0:
            W[:, j] = -col
    return W


def pencil_eigs(SB, Sw):
    """All eigenpairs of ``(SB, Sw)``, eigenvalues descending."""
    w, V = generalized_sym_eig(sym(SB), sym(Sw))
    return w[::-1], V[:, ::-1]


def fda_pencil(X, labels, lam=0.0):
    """Dense ``(S_B, S_w + lam I)``."""
    sf = compute_scatter_factors(X, labels)
    d = sf.Xhat.shape[1]
    return sf.Yhat.T @ sf.Yhat, sf.Xhat.T @ sf.Xhat + lam * np.eye(d)


def exact_fda(X, labels, lam=0.0, p=1):
    """Top-``p`` generalized eigenvectors of ``(S_B, S_w + lam I)``.

    Returns
    -------
    W : ndarray, ``d x p`` with ``W^T (S_w + lam I) W = I``
    rhos : ndarray, descending, nonnegative
    """
    SB, Sw = fda_pencil(X, labels, lam)
    rho, V = pencil_eigs(SB, Sw)
    return _canonical_signs(V[:, :p]), np.maximum(rho[:p], 0.0)


def fda_preconditioner(prob, kind="count_sketch", s=None, seed=0, k=None, transform=None):
    """Metric for the FDA manifold; also returns the sketched ``Xhat`` when sketching."""
    if kind == "identity":
        return Preconditioner.identity(prob.d), None
    if kind == "exact":
        return build_exact_preconditioner(prob.factors.Xhat, prob.lam), None
    if kind == "dominant_subspace":
        if k is None:
            raise DimensionError("dominant_subspace needs k")
        return build_dominant_subspace_preconditioner(prob.factors.Xhat, prob.lam, min(k, prob.d)), None
    if kind != "count_sketch":
        raise DimensionError(f"unknown preconditioner {kind!r}")
    if transform is None:
        if s is None or s < prob.d:
            raise DimensionError(f"sketch size must be at least d={prob.d}, got {s}")
        transform = CountSketchTransform.random(prob.n, s, seed)
    SX = sketch_apply_compact(transform, prob.factors.Xhat)
    meta = {"s": transform.s, "seed": transform.seed, "lambda": prob.lam}
    return factor_from_stack(SX, prob.lam, "count_sketch", meta), SX


def fda_sketch_size(prob, delta=0.1):
    """``20 s_lam(Xhat)^2 / delta``, at least ``d``."""
    return recommended_sketch_size(effective_dimension(prob.factors.Xhat, prob.lam), delta, prob.d, c=20)


def canonicalize_fda(prob, W):
    """Sort columns by ``w^T S_B w`` (descending) and fix signs."""
    YW = prob.Yh.mul(W)
    rq = np.sum(YW * YW, axis=0)
    order = np.argsort(-rq, kind="stable")
    return _canonical_signs(W[:, order]), rq[order]


def solve_fda(prob, M=None, x0=None, solver="cg", options=None, init_seed=0):
    G = prob.geometry(M)
    if x0 is None:
        x0 = G.random_point(init_seed)
    W, trace = solve(prob.as_problem(G), x0, solver, options)
    W, rhos = canonicalize_fda(prob, W)
    return W, rhos, trace


def solve_fda_sketched(
    prob, s=None, delta=0.1, seed=0, options=None, solver="cg", warm_start=True, transform=None, init_seed=None
):
    """Sketch-preconditioned Riemannian FDA with a sketched warm start.

    The metric is ``(S Xh)^T (S Xh) + lam I``. The warm start solves the
    pencil ``(S_B, (S Xh)^T (S Xh) + lam I)`` densely and pulls the result
    onto the true constraint set.

    Returns
    -------
    W, rhos, trace
    """
    if transform is None and s is None:
        s = fda_sketch_size(prob, delta)
    M, SX = fda_preconditioner(prob, "count_sketch", s, seed, transform=transform)
    G = prob.geometry(M)
    if warm_start:
        Yh = prob.factors.Yhat
        _, V = pencil_eigs(Yh.T @ Yh, SX.T @ SX + prob.lam * np.eye(prob.d))
        x0 = G.b_orthonormalize(V[:, : prob.p])
    else:
        x0 = G.random_point(seed if init_seed is None else init_seed)
    W, trace = solve(prob.as_problem(G), x0, solver, options)
    W, rhos = canonicalize_fda(prob, W)
    trace.metadata.update({"s": int(M.metadata["s"]), "seed": M.metadata["seed"], "warm_start": bool(warm_start)})
    return W, rhos, trace


def kappa_star_fda(rho, rho_d, mu):
    """Condition number of the FDA Hessian at the optimum under ``M = S_w + lam I``.

    ``rho`` holds ``rho_1 > ... > rho_{p+1} >= 0`` and ``rho_d`` is the
    smallest pencil eigenvalue.
    """
    mu = np.asarray(mu, dtype=np.float64).ravel()
    p = mu.size
    mu = check_mu(mu, p)
    r = np.asarray(rho, dtype=np.float64).ravel()
    if r.size != p + 1:
        raise DimensionError(f"need p+1={p + 1} eigenvalues, got {r.size}")
    if r[-1] < 0 or np.any(np.diff(r) >= 0):
        raise DimensionError("eigenvalues must be strictly decreasing and nonnegative")
    if rho_d > r[-1]:
        raise DimensionError("rho_d must not exceed rho_{p+1}")
    den = mu[p - 1] * (r[p - 1] - r[p])
    if p > 1:
        den = min(den, np.min(0.5 * (mu[:-1] - mu[1:]) * (r[: p - 1] - r[1:p])))
    return float(mu[0] * (r[0] - rho_d) / den)
