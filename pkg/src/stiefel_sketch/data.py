"""Dataset readers, column splits and synthetic generators."""

from __future__ import annotations

import csv
import warnings

import numpy as np

from .errors import DimensionError, ParseError
from .linops import as_matrix
from .sketching import make_rng


def ingest_libsvm(path):
    """Read ``label idx:val ...`` lines (1-based indices) into a dense matrix.

    Labels are remapped to contiguous codes ``1..l`` in sorted order of the
    original values. Blank lines and ``#`` comments are skipped. Duplicate
    indices on a line keep the last value and emit a warning.

    Returns
    -------
    X : ndarray, ``n x d`` with ``d`` the largest index seen
    labels : ndarray of int
    """
    rows, raw_labels = [], []
    d = 0
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            toks = line.split()
            try:
                raw_labels.append(float(toks[0]))
            except ValueError:
                raise ParseError(f"bad label {toks[0]!r}", path, lineno) from None
            entries = {}
            for tok in toks[1:]:
                idx, sep, val = tok.partition(":")
                try:
                    if not sep:
                        raise ValueError
                    i = int(idx)
                    v = float(val)
                except ValueError:
                    raise ParseError(f"bad token {tok!r}", path, lineno) from None
                if i < 1:
                    raise ParseError(f"index {i} is not 1-based", path, lineno)
                if i in entries:
                    warnings.warn(f"{path}:{lineno}: duplicate index {i}, keeping the last value", stacklevel=2)
                entries[i] = v
                d = max(d, i)
            rows.append(entries)
    if not rows:
        raise ParseError("no data lines", path)
    X = np.zeros((len(rows), d))
    for r, entries in enumerate(rows):
        for i, v in entries.items():
            X[r, i - 1] = v
    _, codes = np.unique(np.asarray(raw_labels), return_inverse=True)
    return X, codes + 1


def write_libsvm(path, X, labels):
    """Emit nonzero entries with ``repr`` precision so reading back is exact."""
    X = as_matrix(X, "X")
    labels = np.asarray(labels).ravel()
    if labels.size != X.shape[0]:
        raise DimensionError("one label per row required")
    with open(path, "w", encoding="utf-8") as fh:
        for lab, row in zip(labels, X):
            nz = np.flatnonzero(row)
            toks = [f"{i + 1}:{float(row[i])!r}" for i in nz]
            fh.write(" ".join([str(lab)] + toks) + "\n")


def ingest_csv(path, has_header=False, delimiter=","):
    """Dense numeric CSV; every row must have the same number of fields."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        rows = []
        width = None
        for lineno, rec in enumerate(reader, 1):
            if has_header and lineno == 1:
                continue
            if not rec or all(not f.strip() for f in rec):
                continue
            if width is None:
                width = len(rec)
            elif len(rec) != width:
                raise ParseError(f"expected {width} fields, got {len(rec)}", path, lineno)
            try:
                rows.append([float(f) for f in rec])
            except ValueError as exc:
                raise ParseError(str(exc), path, lineno) from None
    if not rows:
        raise ParseError("no data rows", path)
    return np.array(rows)


def feature_split(X, rule="left_right_halves"):
    """Partition the columns of ``X`` into two views.

    ``rule`` is ``"left_right_halves"`` (first ``d // 2`` columns versus the
    rest) or a pair of 0-based index lists. Columns left out of an explicit
    split trigger a warning.
    """
    X = as_matrix(X, "X")
    d = X.shape[1]
    if isinstance(rule, str):
        if rule != "left_right_halves":
            raise DimensionError(f"unknown split rule {rule!r}")
        if d < 2:
            raise DimensionError("need at least two columns to split")
        h = d // 2
        return X[:, :h], X[:, h:]
    left, right = (np.asarray(r, dtype=np.int64).ravel() for r in rule)
    if left.size == 0 or right.size == 0:
        raise DimensionError("both views need at least one column")
    both = np.concatenate([left, right])
    if both.min() < 0 or both.max() >= d:
        raise DimensionError(f"column indices must lie in [0, {d})")
    if np.unique(both).size != both.size:
        raise DimensionError("split index lists overlap or repeat")
    if both.size < d:
        warnings.warn(f"split leaves {d - both.size} columns unused", stacklevel=2)
    return X[:, left], X[:, right]


def _mixing(rng, d, cond):
    """Random ``d x d`` matrix with singular values log-spaced in ``[1, cond]``."""
    Q1, _ = np.linalg.qr(rng.standard_normal((d, d)))
    Q2, _ = np.linalg.qr(rng.standard_normal((d, d)))
    return (Q1 * np.logspace(0.0, np.log10(cond), d)) @ Q2


def synthesize_cca(n, dx, dy, target_sigmas, noise=0.0, seed=0, cond=1.0):
    """Two views whose population canonical correlations are ``target_sigmas``.

    For each target ``s_i`` a shared latent column ``z_i`` enters both views
    as ``sqrt(s_i) z_i + sqrt(1 - s_i) e_i`` with independent noise ``e_i``;
    the remaining columns are independent. Each view is then mixed by a
    random invertible matrix with condition number ``cond``, which leaves the
    correlations unchanged but makes the covariances ill-conditioned.
    ``noise > 0`` adds isotropic Gaussian noise after mixing, scaled
    relative to the mixed columns, which lowers the correlations.
    """
    sig = np.asarray(target_sigmas, dtype=np.float64).ravel()
    k = sig.size
    if k == 0 or k > min(dx, dy):
        raise DimensionError(f"need 1..min(dx, dy)={min(dx, dy)} target correlations")
    if np.any(sig <= 0) or np.any(sig > 1) or np.any(np.diff(sig) > 0):
        raise DimensionError("target correlations must lie in (0, 1] and be non-increasing")
    if n <= max(dx, dy) or noise < 0 or cond < 1:
        raise DimensionError("need n > max(dx, dy), noise >= 0 and cond >= 1")
    rng = make_rng(seed)
    Zl = rng.standard_normal((n, k))
    a, b = np.sqrt(sig), np.sqrt(1.0 - sig)
    X = rng.standard_normal((n, dx))
    Y = rng.standard_normal((n, dy))
    X[:, :k] = a * Zl + b * X[:, :k]
    Y[:, :k] = a * Zl + b * Y[:, :k]
    X = X @ _mixing(rng, dx, cond)
    Y = Y @ _mixing(rng, dy, cond)
    if noise > 0:
        X = X + noise * X.std(axis=0).mean() * rng.standard_normal(X.shape)
        Y = Y + noise * Y.std(axis=0).mean() * rng.standard_normal(Y.shape)
    return X, Y


def synthesize_fda(n, d, n_classes=3, separation=3.0, seed=0, cond=1.0):
    """Gaussian blobs with random means, shared covariance, balanced labels.

    Returns ``X`` (``n x d``) and labels in ``1..n_classes``.
    """
    if n_classes < 2 or n < n_classes or d < 1:
        raise DimensionError("need at least two classes, n >= n_classes and d >= 1")
    rng = make_rng(seed)
    labels = np.arange(n) % n_classes + 1
    means = separation * rng.standard_normal((n_classes, d)) / np.sqrt(d)
    X = means[labels - 1] + rng.standard_normal((n, d))
    if cond > 1:
        X = X @ _mixing(rng, d, cond)
    return X, labels
