"""CountSketch transforms and the metric preconditioners built from them.

A preconditioner is stored as an upper-triangular factor ``R`` with
``M = R^T R``. Applying ``M`` costs two triangular matrix products and
``M^{-1}`` two triangular solves, both ``O(d^2 p)``.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import DefinitenessError, DimensionError, ParseError, SingularPreconditionerError
from .linops import as_matrix, sym, thin_qr, thin_svd, triangular_solve

#: Smallest admissible ``|R_ii| / max |R_jj|``.
FACTOR_RTOL = 1e-14

PRECONDITIONER_KINDS = ("identity", "exact", "count_sketch", "dominant_subspace", "dense")


def make_rng(seed):
    """Counter-based generator (Philox) keyed by an integer seed."""
    return np.random.Generator(np.random.Philox(int(seed)))


@dataclass(frozen=True)
class CountSketchTransform:
    """An ``s x n`` CountSketch matrix stored as its hash and sign maps.

    Column ``j`` of the implied matrix holds ``g[j]`` in row ``h[j]`` and
    zeros elsewhere.
    """

    s: int
    n: int
    h: np.ndarray
    g: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        if self.s < 1 or self.n < 1:
            raise DimensionError(f"sketch dimensions must be positive, got s={self.s}, n={self.n}")
        if self.h.shape != (self.n,) or self.g.shape != (self.n,):
            raise DimensionError("hash and sign maps must have one entry per input row")
        if self.h.min() < 0 or self.h.max() >= self.s:
            raise DimensionError("hash values out of range")
        if not np.all(np.abs(self.g) == 1.0):
            raise DimensionError("signs must be +1 or -1")

    @classmethod
    def random(cls, n, s, seed):
        rng = make_rng(seed)
        h = rng.integers(0, s, size=n, dtype=np.int64)
        g = rng.integers(0, 2, size=n).astype(np.float64) * 2.0 - 1.0
        return cls(int(s), int(n), np.ascontiguousarray(h), np.ascontiguousarray(g), int(seed))

    @classmethod
    def identity(cls, n):
        """The degenerate sketch ``S = I_n``."""
        return cls(int(n), int(n), np.arange(n, dtype=np.int64), np.ones(n), None)

    def dense(self):
        S = np.zeros((self.s, self.n))
        S[self.h, np.arange(self.n)] = self.g
        return S


def sketch_apply(t, Z):
    """Return ``S Z`` in one pass over the rows of ``Z``."""
    Z = as_matrix(Z, "Z")
    if Z.shape[0] != t.n:
        raise DimensionError(f"sketch expects {t.n} rows, got {Z.shape[0]}")
    return kernels.countsketch_apply(np.ascontiguousarray(Z), t.h, t.g, t.s)


def sketch_apply_compact(t, Z):
    """``S Z`` without its empty rows when ``s > n``, otherwise ``S Z``.

    Rows of ``S Z`` whose bucket received no input row are zero, so dropping
    them leaves every Gram and cross product of sketched data unchanged. For
    sketch sizes far above ``n`` this keeps memory at ``O(n d)``.
    """
    if t.s <= t.n:
        return sketch_apply(t, Z)
    Z = as_matrix(Z, "Z")
    if Z.shape[0] != t.n:
        raise DimensionError(f"sketch expects {t.n} rows, got {Z.shape[0]}")
    rows, h = np.unique(t.h, return_inverse=True)
    return kernels.countsketch_apply(np.ascontiguousarray(Z), np.ascontiguousarray(h, dtype=np.int64), t.g, rows.size)


@dataclass(frozen=True)
class Preconditioner:
    """Metric matrix ``M = R^T R`` held through its triangular factor."""

    R: np.ndarray
    kind: str = "dense"
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        R = self.R
        if R.ndim != 2 or R.shape[0] != R.shape[1]:
            raise DimensionError(f"factor must be square, got {R.shape}")
        if self.kind not in PRECONDITIONER_KINDS:
            raise DimensionError(f"unknown preconditioner kind {self.kind!r}")
        if not np.allclose(R, np.triu(R), rtol=0, atol=0):
            raise DimensionError("factor must be upper triangular")
        diag = np.abs(np.diag(R))
        if diag.size and (diag.min() <= FACTOR_RTOL * diag.max() or diag.max() == 0):
            raise SingularPreconditionerError(
                "preconditioner factor is singular; increase the sketch size or use lambda > 0"
            )

    @property
    def d(self):
        return self.R.shape[0]

    @classmethod
    def identity(cls, d):
        return cls(np.eye(d), "identity", {})

    @classmethod
    def from_dense(cls, M, kind="dense", metadata=None):
        """Cholesky-factor an explicit SPD matrix."""
        M = sym(as_matrix(M, "M"))
        try:
            L = np.linalg.cholesky(M)
        except np.linalg.LinAlgError as exc:
            raise SingularPreconditionerError(f"metric matrix is not positive definite: {exc}")
        return cls(np.triu(L.T), kind, dict(metadata or {}))

    def apply_m(self, V):
        """``M V = R^T (R V)``."""
        V = self._check(V)
        if self.kind == "identity":
            return V.copy()
        return self.R.T @ (self.R @ V)

    def solve_m(self, V):
        """``M^{-1} V`` by two triangular solves."""
        V = self._check(V)
        if self.kind == "identity":
            return V.copy()
        return triangular_solve(self.R, triangular_solve(self.R, V, trans=True))

    def dense(self):
        return self.R.T @ self.R

    def _check(self, V):
        V = np.asarray(V, dtype=np.float64)
        if V.shape[0] != self.d:
            raise DimensionError(f"preconditioner is {self.d}x{self.d}, operand has {V.shape[0]} rows")
        return V


def preconditioner_apply_m(P, V):
    return P.apply_m(V)


def preconditioner_solve_m(P, V):
    return P.solve_m(V)


def factor_from_stack(A, lam, kind, metadata=None):
    """Factor ``A^T A + lam I`` via thin QR of ``[A; sqrt(lam) I]``."""
    A = as_matrix(A, "A")
    d = A.shape[1]
    if lam < 0:
        raise DimensionError(f"lambda must be nonnegative, got {lam}")
    stack = np.vstack([A, math.sqrt(lam) * np.eye(d)]) if lam > 0 else A
    if stack.shape[0] < d:
        raise SingularPreconditionerError(
            f"stack has {stack.shape[0]} rows for {d} columns; use a larger sketch or lambda > 0"
        )
    _, R = thin_qr(stack)
    return Preconditioner(np.triu(R), kind, dict(metadata or {}))


def build_sketched_preconditioner(Z, lam, s, seed, transform=None):
    """Preconditioner ``M = Z^T S^T S Z + lam I`` for a CountSketch ``S``.

    Only ``S Z`` (``s x d``, empty rows dropped when ``s > n``) is formed,
    never ``Z^T Z`` or ``M``.

    Returns
    -------
    P : Preconditioner
    SZ : ndarray
        The sketched data, reused by warm starts.
    """
    Z = as_matrix(Z, "Z")
    if transform is None:
        if s < 1:
            raise DimensionError(f"sketch size must be positive, got {s}")
        transform = CountSketchTransform.random(Z.shape[0], s, seed)
    SZ = sketch_apply_compact(transform, Z)
    meta = {"s": transform.s, "seed": transform.seed, "lambda": float(lam)}
    return factor_from_stack(SZ, lam, "count_sketch", meta), SZ


def build_exact_preconditioner(Z, lam):
    """``M = Z^T Z + lam I`` factored from the data. Costs ``O(n d^2)``."""
    return factor_from_stack(Z, lam, "exact", {"lambda": float(lam)})


def effective_dimension(Z, lam):
    """``sum_i s_i^2 / (s_i^2 + lam)`` over the singular values of ``Z``."""
    Z = as_matrix(Z, "Z")
    sv = thin_svd(Z)[1]
    sv2 = sv**2
    if lam < 0:
        raise DimensionError(f"lambda must be nonnegative, got {lam}")
    if lam == 0:
        if sv.size < Z.shape[1] or sv2.min() <= 1e-12 * sv2.max():
            raise DefinitenessError("Z^T Z is singular and lambda = 0")
        return float(Z.shape[1])
    return float(np.sum(sv2 / (sv2 + lam)))


def recommended_sketch_size(s_lambda, delta, d, c=20):
    """``max(ceil(c * s_lambda^2 / delta), d)``; ``c`` is 20 for one matrix, 40 for two."""
    if not 0 < delta < 1:
        raise DimensionError(f"delta must lie in (0, 1), got {delta}")
    return max(int(math.ceil(c * s_lambda**2 / delta)), int(d))


def build_dominant_subspace_preconditioner(Z, lam, k):
    """Top-``k`` eigenspace of ``Z^T Z`` kept exactly, the rest flattened.

    ``M = U_k (L_k - l_k I) U_k^T + (l_k + lam) I`` where ``l_k`` is the
    ``k``-th largest eigenvalue.
    """
    Z = as_matrix(Z, "Z")
    d = Z.shape[1]
    if not 1 <= k <= d:
        raise DimensionError(f"k must lie in [1, {d}], got {k}")
    w, U = np.linalg.eigh(sym(Z.T @ Z))
    w, U = w[::-1], U[:, ::-1]
    lk = max(w[k - 1], 0.0)
    Uk = U[:, :k]
    M = (Uk * (w[:k] - lk)) @ Uk.T + (lk + lam) * np.eye(d)
    return Preconditioner.from_dense(
        M, "dominant_subspace", {"k": int(k), "lambda": float(lam)}
    )


_MAGIC = b"SSPC"
_VERSION = 1


def save_preconditioner(path, P):
    """Write ``P`` to a binary container.

    Layout (little endian): ``b"SSPC"``, u16 version, u16 kind index,
    u64 ``d``, ``d(d+1)/2`` float64 values of the upper triangle in row-major
    order, u32 metadata length, UTF-8 JSON metadata.
    """
    d = P.d
    iu = np.triu_indices(d)
    meta = json.dumps(P.metadata, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<HHQ", _VERSION, PRECONDITIONER_KINDS.index(P.kind), d))
        fh.write(np.ascontiguousarray(P.R[iu], dtype="<f8").tobytes())
        fh.write(struct.pack("<I", len(meta)))
        fh.write(meta)


def load_preconditioner(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != _MAGIC:
        raise ParseError("not a preconditioner container (bad magic)", path)
    try:
        version, kind, d = struct.unpack_from("<HHQ", blob, 4)
        if version != _VERSION:
            raise ParseError(f"unsupported container version {version}", path)
        off = 4 + struct.calcsize("<HHQ")
        m = d * (d + 1) // 2
        vals = np.frombuffer(blob, dtype="<f8", count=m, offset=off)
        off += 8 * m
        (mlen,) = struct.unpack_from("<I", blob, off)
        meta = json.loads(blob[off + 4 : off + 4 + mlen].decode())
    except (struct.error, ValueError) as exc:
        raise ParseError(f"truncated or corrupt container: {exc}", path)
    R = np.zeros((d, d))
    R[np.triu_indices(d)] = vals
    return Preconditioner(R, PRECONDITIONER_KINDS[kind], meta)
