"""Spectral diagnostics: dense Riemannian Hessians, closed-form spectra at
critical points, pencil conditioning and suboptimality curves."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, GeometryError
from .linops import GramOperator, as_matrix, sym, triangular_solve
from .sketching import make_rng

#: Relative cutoff for dropping near-null projected directions.
BASIS_RTOL = 1e-10
#: Allowed relative asymmetry of the materialized Hessian.
ASYM_RTOL = 1e-8


@dataclass
class HessianSpectrumReport:
    eigenvalues: np.ndarray
    condition_number: float
    tangent_dim: int
    metric_kind: str = ""
    asymmetry: float = 0.0
    extras: dict = field(default_factory=dict)

    @property
    def indefinite(self):
        return bool(self.eigenvalues[0] < 0 < self.eigenvalues[-1])

    @property
    def positive_definite(self):
        return bool(self.eigenvalues[0] > 0)

    def to_dict(self):
        return {
            "eigenvalues": [float(x) for x in self.eigenvalues],
            "condition_number": float(self.condition_number),
            "tangent_dim": int(self.tangent_dim),
            "metric_kind": self.metric_kind,
            "indefinite": self.indefinite,
        }


def _metric_kind(geometry):
    if hasattr(geometry, "factors"):
        return "+".join(f.M.kind for f in geometry.factors)
    return geometry.M.kind


def tangent_basis(geometry, X, seed=None):
    """Metric-orthonormal basis of the tangent space at ``X``.

    Ambient coordinate directions (or Gaussian directions when ``seed`` is
    given) are projected onto the tangent space, and their metric Gram
    matrix is diagonalized; directions with relative weight below
    ``BASIS_RTOL`` are dropped.

    Returns an array of shape ``(dim, d, p)``.
    """
    d, p = geometry.ambient_shape
    m = d * p
    if seed is None:
        dirs = np.eye(m).reshape(m, d, p)
    else:
        dirs = make_rng(seed).standard_normal((m, d, p))
    P = np.array([geometry.project(X, e) for e in dirs])
    K = np.empty((m, m))
    for i in range(m):
        # Gram entries via the metric of the geometry
        for j in range(i, m):
            K[i, j] = K[j, i] = geometry.inner(X, P[i], P[j])
    w, Q = np.linalg.eigh(sym(K))
    keep = w > BASIS_RTOL * w[-1]
    if keep.sum() != geometry.dim:
        raise GeometryError(
            f"tangent basis has {keep.sum()} directions, expected {geometry.dim}"
        )
    C = Q[:, keep] / np.sqrt(w[keep])
    return np.tensordot(C.T, P, axes=1)


def materialize_hessian(problem, X, geometry=None, basis_seed=None):
    """Dense matrix of the Riemannian Hessian in a metric-orthonormal basis.

    Parameters
    ----------
    problem : optim.Problem
    X : ndarray
        Base point, typically a critical point.
    geometry : optional
        Defaults to ``problem.geometry``.
    basis_seed : int, optional
        Build the basis from random instead of coordinate directions.
    """
    G = geometry or problem.geometry
    basis = tangent_basis(G, X, basis_seed)
    egrad = problem.egrad(X)
    rgrad = G.egrad2rgrad(X, egrad)
    HB = [G.ehess2rhess(X, egrad, problem.ehess(X, b), b, rgrad) for b in basis]
    k = len(basis)
    H = np.empty((k, k))
    for i in range(k):
        for j in range(k):
            H[i, j] = G.inner(X, basis[i], HB[j])
    scale = max(np.abs(H).max(), 1e-300)
    asym = float(np.abs(H - H.T).max() / scale)
    if asym > ASYM_RTOL:
        raise GeometryError(f"materialized Hessian is not symmetric (relative asymmetry {asym:.2e})")
    eigs = np.linalg.eigvalsh(sym(H))
    a = np.abs(eigs)
    cond = float(a.max() / a.min()) if a.min() > 0 else float("inf")
    return HessianSpectrumReport(eigs, cond, k, _metric_kind(G), asym)


def closed_form_cca_spectrum(beta, mu, dims):
    """Hessian eigenvalues at a CCA critical point under ``M = Sigma``.

    Parameters
    ----------
    beta : array_like
        Signed correlations ``beta_1..beta_dy``; the first ``p`` belong to
        the selected pairs.
    mu : array_like
        ``p`` weights.
    dims : tuple
        ``(dx, dy, p)`` with ``dx >= dy >= p``.
    """
    dx, dy, p = (int(v) for v in dims)
    b = np.asarray(beta, dtype=np.float64).ravel()
    mu = np.asarray(mu, dtype=np.float64).ravel()
    if not dx >= dy >= p >= 1 or b.size != dy or mu.size != p:
        raise DimensionError(f"inconsistent dims {dims} for {b.size} correlations and {mu.size} weights")
    bj, bi = b[:p, None], b[None, p:]
    mj = mu[:, None]
    vals = [
        (mj * (bj + bi)).ravel(),
        (mj * (bj - bi)).ravel(),
        np.repeat(mu * b[:p], dx - dy),
    ]
    ju, iu = np.triu_indices(p, k=1)
    vals.append(0.5 * (mu[ju] + mu[iu]) * (b[ju] + b[iu]))
    vals.append(0.5 * (mu[ju] - mu[iu]) * (b[ju] - b[iu]))
    return np.sort(np.concatenate(vals))


def closed_form_fda_spectrum(alpha, mu, p):
    """Hessian eigenvalues at an FDA critical point under ``M = S_w + lam I``.

    ``alpha`` lists all ``d`` pencil eigenvalues with the selected ``p`` first.
    """
    a = np.asarray(alpha, dtype=np.float64).ravel()
    mu = np.asarray(mu, dtype=np.float64).ravel()
    p = int(p)
    if not 1 <= p <= a.size or mu.size != p:
        raise DimensionError(f"inconsistent sizes: d={a.size}, p={p}, {mu.size} weights")
    ju, iu = np.triu_indices(p, k=1)
    pairs = 0.5 * (mu[ju] - mu[iu]) * (a[ju] - a[iu])
    cross = (mu[:, None] * (a[:p, None] - a[None, p:])).ravel()
    return np.sort(np.concatenate([pairs, cross]))


def pencil_condition(B, M):
    """Eigenvalues of the pencil ``(B, M)`` and their max/min ratio.

    ``B`` is a :class:`GramOperator` or a dense SPD matrix; ``M`` a
    :class:`Preconditioner`. Computed as the spectrum of ``R^{-T} B R^{-1}``.
    """
    Bd = B.dense() if isinstance(B, GramOperator) else as_matrix(B, "B")
    if Bd.shape != (M.d, M.d):
        raise DimensionError(f"B is {Bd.shape}, M is {M.d}x{M.d}")
    T = triangular_solve(M.R, Bd, trans=True)
    A = triangular_solve(M.R, T.T, trans=True)
    eigs = np.linalg.eigvalsh(sym(A))
    if eigs[0] <= 0:
        raise DimensionError("pencil is not definite")
    return eigs, float(eigs[-1] / eigs[0])


def suboptimality(trace, reference):
    """``|reference + cost_k| / reference`` along a trace (or a cost sequence)."""
    if not reference > 0:
        raise DimensionError(f"reference value must be positive, got {reference}")
    costs = np.asarray(getattr(trace, "costs", trace), dtype=np.float64)
    return np.abs(reference + costs) / reference
