"""Generalized Stiefel manifold ``{X : X^T B X = I_p}`` under the metric
``g(xi, eta) = Tr(xi^T M eta)`` with a fixed SPD preconditioner ``M``.

Points and tangent vectors are plain ``d x p`` arrays. ``B`` is only ever
applied (through a :class:`~stiefel_sketch.linops.GramOperator`); only ``M``
is inverted.

:class:`ProductGeometry` stacks several factors with the same ``p``
vertically, ``Z = [U; V]``, and applies every operation blockwise.
"""

from __future__ import annotations

import numpy as np

from .errors import DefinitenessError, DimensionError, GeometryError, RankDeficiencyError
from .linops import GramOperator, solve_small_lyapunov, spd_inv_sqrt, sym
from .sketching import Preconditioner, make_rng

#: Tolerance on ``||X^T B X - I||_F`` and on tangency residuals.
FEASIBILITY_TOL = 1e-8


class GenStiefelGeometry:
    """``St_B(p, d)`` with metric matrix ``M``.

    Parameters
    ----------
    B : GramOperator
        Constraint operator.
    M : Preconditioner
        Metric. ``Preconditioner.identity(d)`` gives the Euclidean metric.
    p : int
        Number of columns.
    """

    def __init__(self, B, M, p):
        if not isinstance(B, GramOperator):
            raise TypeError("B must be a GramOperator")
        d = B.d
        if M.d != d:
            raise DimensionError(f"metric is {M.d}x{M.d} but B is {d}x{d}")
        if not 1 <= p <= d:
            raise DimensionError(f"need 1 <= p <= d, got p={p}, d={d}")
        self.B = B
        self.M = M
        self.d = d
        self.p = int(p)
        self._bx_key = None
        self._bx_val = None

    # bookkeeping -------------------------------------------------------

    @property
    def dim(self):
        """Manifold dimension ``dp - p(p+1)/2``."""
        return self.d * self.p - self.p * (self.p + 1) // 2

    @property
    def ambient_shape(self):
        return (self.d, self.p)

    def _bx(self, X):
        """``B X``, memoized for the last point."""
        key = self._bx_key
        if key is not None and key.shape == X.shape and np.array_equal(key, X):
            return self._bx_val
        BX = self.B.apply(X)
        self._bx_key = X.copy()
        self._bx_val = BX
        return BX

    def _check(self, A, what):
        A = np.asarray(A, dtype=np.float64)
        if A.shape != (self.d, self.p):
            raise DimensionError(f"{what} must be {self.d}x{self.p}, got {A.shape}")
        return A

    # metric -------------------------------------------------------------

    def inner(self, X, xi, eta):
        """``Tr(xi^T M eta)``."""
        return float(np.sum(xi * self.M.apply_m(eta)))

    def norm(self, X, xi):
        return float(np.sqrt(max(self.inner(X, xi, xi), 0.0)))

    def zero_vector(self, X):
        return np.zeros((self.d, self.p))

    # constraint residuals ----------------------------------------------

    def feasibility(self, X):
        """``||X^T B X - I_p||_F``."""
        X = self._check(X, "point")
        return float(np.linalg.norm(self.B.quad(X) - np.eye(self.p)))

    def tangency(self, X, V):
        """``||V^T B X + X^T B V||_F``."""
        XtBV = self._bx(self._check(X, "point")).T @ self._check(V, "vector")
        return float(np.linalg.norm(XtBV + XtBV.T))

    # projections --------------------------------------------------------

    def normal_vector(self, X, S):
        """``M^{-1} B X S`` for symmetric ``S``; spans the normal space."""
        return self.M.solve_m(self._bx(X) @ S)

    def project(self, X, V):
        """Metric-orthogonal projection onto ``T_X St_B``."""
        X = self._check(X, "point")
        V = self._check(V, "vector")
        BX = self._bx(X)
        MinvBX = self.M.solve_m(BX)
        C = BX.T @ MinvBX
        XtBV = BX.T @ V
        try:
            S = solve_small_lyapunov(C, XtBV + XtBV.T)
        except DefinitenessError as exc:
            raise GeometryError(f"projection failed: {exc}") from exc
        return V - MinvBX @ S

    project_tangent = project

    def egrad2rgrad(self, X, egrad):
        """Riemannian gradient ``Pi_X(M^{-1} egrad)``."""
        return self.project(X, self.M.solve_m(self._check(egrad, "gradient")))

    def ehess2rhess(self, X, egrad, ehess_xi, xi, rgrad=None):
        """Riemannian Hessian applied to ``xi``.

        ``Pi_X(M^{-1}(ehess[xi] - B xi (X^T egrad - X^T M grad)))``.
        """
        if rgrad is None:
            rgrad = self.egrad2rgrad(X, egrad)
        inner = X.T @ egrad - X.T @ self.M.apply_m(rgrad)
        return self.project(X, self.M.solve_m(ehess_xi - self.B.apply(xi) @ inner))

    # retraction and transport ------------------------------------------

    def retract(self, X, xi):
        """Polar retraction ``(X + xi)(I + xi^T B xi)^{-1/2}``."""
        X = self._check(X, "point")
        xi = self._check(xi, "vector")
        if not np.any(xi):
            return X.copy()
        G = np.eye(self.p) + self.B.quad(xi)
        try:
            W = spd_inv_sqrt(G)
        except DefinitenessError as exc:
            raise GeometryError(f"retraction failed: {exc}") from exc
        return (X + xi) @ W

    def transport(self, X, eta, xi, X_new=None):
        """Move ``xi`` to the tangent space at ``retract(X, eta)`` by projection."""
        if X_new is None:
            X_new = self.retract(X, eta)
        return self.project(X_new, xi)

    # points -------------------------------------------------------------

    def b_orthonormalize(self, W):
        """``W (W^T B W)^{-1/2}``."""
        W = self._check(W, "basis")
        G = sym(self.B.quad(W))
        w = np.linalg.eigvalsh(G)
        if w[-1] <= 0 or w[0] <= 1e-14 * w[-1]:
            raise RankDeficiencyError("W^T B W is singular; W does not have full B-rank")
        return W @ spd_inv_sqrt(G)

    def random_point(self, seed):
        rng = make_rng(seed)
        for _ in range(10):
            try:
                return self.b_orthonormalize(rng.standard_normal((self.d, self.p)))
            except RankDeficiencyError:
                continue
        raise RankDeficiencyError("could not draw a full-rank point")

    def random_tangent(self, X, rng):
        """Unit-norm tangent vector from a projected Gaussian."""
        if self.dim == 0:
            raise GeometryError("tangent space is zero-dimensional")
        xi = self.project(X, rng.standard_normal((self.d, self.p)))
        return xi / self.norm(X, xi)

    def split(self, A):
        return [A]

    def blocks(self):
        return [self]


class ProductGeometry:
    """Product of generalized Stiefel factors with equal ``p``.

    Points are the factors stacked vertically. Inner products and norms add
    across factors; everything else is applied blockwise.
    """

    def __init__(self, *factors):
        if len(factors) < 1:
            raise DimensionError("need at least one factor")
        ps = {f.p for f in factors}
        if len(ps) != 1:
            raise DimensionError(f"factors must share p, got {sorted(ps)}")
        self.factors = tuple(factors)
        self.p = factors[0].p
        self.d = sum(f.d for f in factors)
        self._offsets = np.cumsum([0] + [f.d for f in factors])

    @property
    def dim(self):
        return sum(f.dim for f in self.factors)

    @property
    def ambient_shape(self):
        return (self.d, self.p)

    def split(self, A):
        A = np.asarray(A, dtype=np.float64)
        if A.shape != (self.d, self.p):
            raise DimensionError(f"expected shape {(self.d, self.p)}, got {A.shape}")
        o = self._offsets
        return [A[o[i] : o[i + 1]] for i in range(len(self.factors))]

    def blocks(self):
        return list(self.factors)

    def _map(self, method, *arrays):
        parts = [self.split(a) for a in arrays]
        return np.vstack(
            [getattr(f, method)(*(p[i] for p in parts)) for i, f in enumerate(self.factors)]
        )

    def inner(self, X, xi, eta):
        return sum(
            f.inner(x, a, b)
            for f, x, a, b in zip(self.factors, self.split(X), self.split(xi), self.split(eta))
        )

    def norm(self, X, xi):
        return float(np.sqrt(max(self.inner(X, xi, xi), 0.0)))

    def zero_vector(self, X):
        return np.zeros((self.d, self.p))

    def feasibility(self, X):
        return float(np.sqrt(sum(f.feasibility(x) ** 2 for f, x in zip(self.factors, self.split(X)))))

    def tangency(self, X, V):
        return float(
            np.sqrt(
                sum(f.tangency(x, v) ** 2 for f, x, v in zip(self.factors, self.split(X), self.split(V)))
            )
        )

    def normal_vector(self, X, S_list):
        return np.vstack(
            [f.normal_vector(x, S) for f, x, S in zip(self.factors, self.split(X), S_list)]
        )

    def project(self, X, V):
        return self._map("project", X, V)

    project_tangent = project

    def egrad2rgrad(self, X, egrad):
        return self._map("egrad2rgrad", X, egrad)

    def ehess2rhess(self, X, egrad, ehess_xi, xi, rgrad=None):
        if rgrad is None:
            rgrad = self.egrad2rgrad(X, egrad)
        return self._map("ehess2rhess", X, egrad, ehess_xi, xi, rgrad)

    def retract(self, X, xi):
        return self._map("retract", X, xi)

    def transport(self, X, eta, xi, X_new=None):
        if X_new is None:
            X_new = self.retract(X, eta)
        return self.project(X_new, xi)

    def b_orthonormalize(self, W):
        return self._map("b_orthonormalize", W)

    def random_point(self, seed):
        rng = make_rng(seed)
        seeds = rng.integers(0, 2**62, size=len(self.factors))
        return np.vstack([f.random_point(int(s)) for f, s in zip(self.factors, seeds)])

    def random_tangent(self, X, rng):
        """Unit-norm tangent vector from a projected Gaussian."""
        if self.dim == 0:
            raise GeometryError("tangent space is zero-dimensional")
        xi = self.project(X, rng.standard_normal((self.d, self.p)))
        return xi / self.norm(X, xi)


# Functional spellings of the geometry operations.

def project_tangent(G, X, V):
    return G.project(X, V)


def retract_polar(G, X, xi):
    return G.retract(X, xi)


def metric_inner(G, X, xi, eta):
    return G.inner(X, xi, eta)


def vector_transport(G, X, eta, xi):
    return G.transport(X, eta, xi)


def riemannian_gradient(G, X, egrad):
    return G.egrad2rgrad(X, egrad)


def riemannian_hessian_apply(G, X, egrad, ehess_xi, xi):
    return G.ehess2rhess(X, egrad, ehess_xi, xi)


def b_orthonormalize(G, W):
    return G.b_orthonormalize(W)


def random_point(G, seed):
    return G.random_point(seed)
