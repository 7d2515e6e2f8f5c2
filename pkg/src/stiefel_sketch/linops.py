"""Dense kernels and implicit operators.

Matrices are plain ``numpy.ndarray`` objects of dtype float64. The data
matrices (``X``, ``Y``, the centered FDA matrix) are wrapped in
:class:`DataMatrix` so that every product with them is counted; Gram
matrices ``Z^T Z + lam*I`` are never formed by the operators here.
"""

from __future__ import annotations

import numpy as np
from scipy import linalg as sla

from .errors import DefinitenessError, DimensionError

#: Relative eigenvalue floor below which a matrix is declared indefinite.
SPD_RTOL = 1e-12


def as_matrix(A, name="matrix"):
    """Return ``A`` as a finite 2-D float64 array."""
    A = np.asarray(A, dtype=np.float64)
    if A.ndim == 1:
        A = A[:, None]
    if A.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise DimensionError(f"{name} contains non-finite entries")
    return A


def sym(A):
    return 0.5 * (A + A.T)


class ProductCounter:
    """Tally of products with data matrices.

    One unit is one multiplication of a data matrix (or its transpose) by a
    block of vectors, regardless of the block width.
    """

    __slots__ = ("count",)

    def __init__(self):
        self.count = 0

    def add(self, k=1):
        self.count += k

    def reset(self):
        self.count = 0

    def __repr__(self):
        return f"ProductCounter({self.count})"


class DataMatrix:
    """A tall data matrix with counted products.

    The two most recent ``Z @ V`` results are memoized (keyed by the contents
    of ``V``), because solvers routinely need ``Z V`` for the cost, the
    gradient and the Gram product at the same point, interleaved with one
    product along a search direction.
    """

    MEMO_SIZE = 2

    def __init__(self, Z, counter=None, name="Z"):
        self.Z = as_matrix(Z, name)
        self.counter = counter if counter is not None else ProductCounter()
        self.name = name
        self._memo = []

    @property
    def shape(self):
        return self.Z.shape

    def mul(self, V):
        """``Z @ V``."""
        V = np.asarray(V, dtype=np.float64)
        if V.shape[0] != self.Z.shape[1]:
            raise DimensionError(
                f"{self.name} has {self.Z.shape[1]} columns, operand has {V.shape[0]} rows"
            )
        for i, (key, out) in enumerate(self._memo):
            if key.shape == V.shape and np.array_equal(key, V):
                if i:
                    self._memo.insert(0, self._memo.pop(i))
                return out
        out = self.Z @ V
        self.counter.add()
        self._memo.insert(0, (V.copy(), out))
        del self._memo[self.MEMO_SIZE :]
        return out

    def clear_memo(self):
        self._memo = []

    def tmul(self, W):
        """``Z.T @ W``."""
        W = np.asarray(W, dtype=np.float64)
        if W.shape[0] != self.Z.shape[0]:
            raise DimensionError(
                f"{self.name} has {self.Z.shape[0]} rows, operand has {W.shape[0]} rows"
            )
        self.counter.add()
        return self.Z.T @ W


class GramOperator:
    """The SPD operator ``B = Z^T Z + lam*I`` applied through two thin products.

    Parameters
    ----------
    Z : array_like or DataMatrix
        ``n x d`` factor.
    lam : float
        Nonnegative ridge term.
    """

    def __init__(self, Z, lam=0.0, counter=None):
        if lam < 0 or not np.isfinite(lam):
            raise DimensionError(f"regularizer must be a finite nonnegative number, got {lam}")
        self.data = Z if isinstance(Z, DataMatrix) else DataMatrix(Z, counter)
        self.lam = float(lam)

    @property
    def Z(self):
        return self.data.Z

    @property
    def d(self):
        return self.data.shape[1]

    def apply(self, V):
        V = _check_rows(V, self.d)
        return self.data.tmul(self.data.mul(V)) + self.lam * V

    def quad(self, V, W=None):
        """``V^T B W`` (``W = V`` by default) without forming ``B V``."""
        V = _check_rows(V, self.d)
        ZV = self.data.mul(V)
        if W is None:
            return ZV.T @ ZV + self.lam * (V.T @ V)
        W = _check_rows(W, self.d)
        return ZV.T @ self.data.mul(W) + self.lam * (V.T @ W)

    def dense(self):
        """Explicit ``d x d`` matrix. Oracle and diagnostic use only."""
        Z = self.data.Z
        return Z.T @ Z + self.lam * np.eye(self.d)


class CrossOperator:
    """``X^T Y`` applied implicitly; both factors share their row count."""

    def __init__(self, X, Y, counter=None):
        self.X = X if isinstance(X, DataMatrix) else DataMatrix(X, counter, "X")
        self.Y = Y if isinstance(Y, DataMatrix) else DataMatrix(Y, counter, "Y")
        if self.X.shape[0] != self.Y.shape[0]:
            raise DimensionError(
                f"views have different row counts: {self.X.shape[0]} vs {self.Y.shape[0]}"
            )

    @property
    def shape(self):
        return self.X.shape[1], self.Y.shape[1]

    def apply(self, V):
        """``X^T (Y V)``."""
        return self.X.tmul(self.Y.mul(V))

    def apply_t(self, U):
        """``Y^T (X U)``."""
        return self.Y.tmul(self.X.mul(U))

    def bilinear(self, U, V):
        """``U^T X^T Y V``."""
        return self.X.mul(U).T @ self.Y.mul(V)

    def dense(self):
        return self.X.Z.T @ self.Y.Z


def _check_rows(V, d):
    V = np.asarray(V, dtype=np.float64)
    if V.ndim != 2 or V.shape[0] != d:
        raise DimensionError(f"expected an array with {d} rows, got shape {V.shape}")
    return V


def gram_apply(op, V):
    """Return ``Z^T (Z V) + lam V`` for a :class:`GramOperator`."""
    return op.apply(V)


def _spd_eigh(A, what="matrix"):
    """Eigendecomposition of an SPD matrix with the package tolerance policy.

    Eigenvalues above ``-SPD_RTOL*||A||_2`` are accepted; those at or below
    zero are clamped to a tiny positive value. Anything lower is an error.
    """
    A = sym(as_matrix(A, what))
    w, Q = np.linalg.eigh(A)
    scale = np.max(np.abs(w)) if w.size else 0.0
    if scale == 0.0:
        raise DefinitenessError(f"{what} is zero")
    if w[0] <= -SPD_RTOL * scale:
        raise DefinitenessError(
            f"{what} is not positive definite (smallest eigenvalue {w[0]:.3e}, "
            f"largest {w[-1]:.3e})"
        )
    tiny = np.finfo(np.float64).eps * scale * 1e-3
    return np.maximum(w, tiny), Q


def solve_small_lyapunov(C, E):
    """Solve ``C S + S C = E`` for symmetric ``S`` with ``C`` SPD.

    Uses the eigendecomposition ``C = Q diag(w) Q^T``; in that basis the
    equation is elementwise, ``S'_ij = E'_ij / (w_i + w_j)``.
    """
    C = as_matrix(C, "C")
    E = as_matrix(E, "E")
    if C.shape[0] != C.shape[1] or E.shape != C.shape:
        raise DimensionError(f"shape mismatch: C {C.shape}, E {E.shape}")
    w, Q = _spd_eigh(C, "Lyapunov coefficient")
    Et = Q.T @ E @ Q
    S = Q @ (Et / (w[:, None] + w[None, :])) @ Q.T
    return sym(S)


def spd_inv_sqrt(A):
    """``A^{-1/2}`` for SPD ``A`` (same eigenvectors, inverse root eigenvalues)."""
    A = as_matrix(A, "A")
    if A.shape[0] != A.shape[1]:
        raise DimensionError(f"A must be square, got {A.shape}")
    w, Q = _spd_eigh(A, "A")
    if w[0] <= SPD_RTOL * w[-1]:
        raise DefinitenessError(
            f"matrix is numerically singular (eigenvalue ratio {w[0] / w[-1]:.3e}); add regularization"
        )
    return sym((Q / np.sqrt(w)) @ Q.T)


def spd_sqrt(A):
    w, Q = _spd_eigh(A, "A")
    return sym((Q * np.sqrt(w)) @ Q.T)


def thin_qr(A):
    """Reduced QR with a nonnegative diagonal in ``R``."""
    A = as_matrix(A, "A")
    m, d = A.shape
    if m < d:
        raise DimensionError(f"thin QR needs rows >= cols, got {A.shape}")
    Q, R = np.linalg.qr(A, mode="reduced")
    signs = np.where(np.diag(R) < 0, -1.0, 1.0)
    return Q * signs, R * signs[:, None]


def sym_eig(A):
    """Eigenpairs of a symmetric matrix, eigenvalues ascending."""
    A = as_matrix(A, "A")
    if A.shape[0] != A.shape[1]:
        raise DimensionError(f"A must be square, got {A.shape}")
    return np.linalg.eigh(sym(A))


def thin_svd(A):
    """``U, s, Vt`` with singular values descending."""
    return np.linalg.svd(as_matrix(A, "A"), full_matrices=False)


def generalized_sym_eig(A, B):
    """Solve ``A v = w B v`` for symmetric ``A`` and SPD ``B``.

    Whitens with ``B^{-1/2}``. Eigenvalues are ascending; eigenvectors satisfy
    ``V^T B V = I``.
    """
    A = as_matrix(A, "A")
    B = as_matrix(B, "B")
    if A.shape != B.shape or A.shape[0] != A.shape[1]:
        raise DimensionError(f"pencil shapes differ: {A.shape} vs {B.shape}")
    W = spd_inv_sqrt(B)
    w, Q = np.linalg.eigh(sym(W @ A @ W))
    return w, W @ Q


def triangular_solve(R, V, lower=False, trans=False):
    """Solve ``R x = V`` (or ``R^T x = V`` with ``trans``) for triangular ``R``."""
    return sla.solve_triangular(R, V, lower=lower, trans="T" if trans else "N", check_finite=False)
