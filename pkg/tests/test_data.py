import warnings

import numpy as np
import pytest

from stiefel_sketch.cca import exact_cca
from stiefel_sketch.data import (
    feature_split,
    ingest_csv,
    ingest_libsvm,
    synthesize_cca,
    synthesize_fda,
    write_libsvm,
)
from stiefel_sketch.errors import DimensionError, ParseError


def test_libsvm_example(tmp_path):
    f = tmp_path / "a.svm"
    f.write_text("1 1:1.0 3:2.0\n2 2:1.0\n")
    X, y = ingest_libsvm(f)
    np.testing.assert_array_equal(X, [[1, 0, 2], [0, 1, 0]])
    np.testing.assert_array_equal(y, [1, 2])


def test_libsvm_label_remap_and_comments(tmp_path):
    f = tmp_path / "a.svm"
    f.write_text("# header\n-1 1:3\n\n+1 2:4  # trailing\n-1 1:5\n")
    X, y = ingest_libsvm(f)
    np.testing.assert_array_equal(y, [1, 2, 1])
    assert X.shape == (3, 2)


def test_libsvm_duplicate_index_warns(tmp_path):
    f = tmp_path / "a.svm"
    f.write_text("1 2:1.0 2:5.0\n")
    with pytest.warns(UserWarning, match="duplicate"):
        X, _ = ingest_libsvm(f)
    assert X[0, 1] == 5.0


@pytest.mark.parametrize(
    "text, line",
    [("1 1:1\nx 1:2\n", 2), ("1 1:1\n1 2:2\n1 3\n", 3), ("1 0:1\n", 1), ("1 a:1\n", 1)],
)
def test_libsvm_parse_errors(tmp_path, text, line):
    f = tmp_path / "bad.svm"
    f.write_text(text)
    with pytest.raises(ParseError) as err:
        ingest_libsvm(f)
    assert err.value.line == line
    assert str(line) in str(err.value)


def test_libsvm_empty(tmp_path):
    f = tmp_path / "e.svm"
    f.write_text("# nothing\n")
    with pytest.raises(ParseError):
        ingest_libsvm(f)


def test_libsvm_round_trip(tmp_path, rng):
    X = rng.standard_normal((20, 7))
    X[rng.random(X.shape) < 0.4] = 0.0
    X[:, -1] = 1.0  # keep the width
    y = rng.integers(1, 4, size=20)
    y[:3] = [1, 2, 3]
    f = tmp_path / "rt.svm"
    write_libsvm(f, X, y)
    assert "np." not in f.read_text()
    X2, y2 = ingest_libsvm(f)
    np.testing.assert_array_equal(X2, X)
    np.testing.assert_array_equal(y2, y)


def test_csv(tmp_path):
    f = tmp_path / "a.csv"
    f.write_text("a,b\n1,2\n3,4.5\n")
    np.testing.assert_array_equal(ingest_csv(f, has_header=True), [[1, 2], [3, 4.5]])
    f.write_text("1,2\n3\n")
    with pytest.raises(ParseError) as err:
        ingest_csv(f)
    assert err.value.line == 2
    f.write_text("1,zz\n")
    with pytest.raises(ParseError):
        ingest_csv(f)


def test_feature_split(rng):
    X = rng.standard_normal((4, 5))
    A, B = feature_split(X)
    np.testing.assert_array_equal(A, X[:, :2])
    np.testing.assert_array_equal(B, X[:, 2:])
    A, B = feature_split(X, ([4, 0], [1, 2, 3]))
    np.testing.assert_array_equal(A, X[:, [4, 0]])
    with pytest.warns(UserWarning, match="unused"):
        feature_split(X, ([0], [1]))
    for bad in [([0, 1], [1, 2]), ([0], [7]), ([], [1])]:
        with pytest.raises(DimensionError):
            feature_split(X, bad)
    with pytest.raises(DimensionError):
        feature_split(X, "random")


def test_synthesis_is_deterministic():
    a = synthesize_cca(200, 6, 5, [0.8, 0.3], seed=4, cond=10)
    b = synthesize_cca(200, 6, 5, [0.8, 0.3], seed=4, cond=10)
    c = synthesize_cca(200, 6, 5, [0.8, 0.3], seed=5, cond=10)
    np.testing.assert_array_equal(a[0], b[0])
    np.testing.assert_array_equal(a[1], b[1])
    assert not np.array_equal(a[0], c[0])
    X1, y1 = synthesize_fda(100, 4, 3, seed=1)
    X2, y2 = synthesize_fda(100, 4, 3, seed=1)
    np.testing.assert_array_equal(X1, X2)
    np.testing.assert_array_equal(np.bincount(y1), [0, 34, 33, 33])


def test_synthesized_correlations_are_recovered():
    X, Y = synthesize_cca(5000, 8, 6, [0.9, 0.5], seed=0, cond=20)
    sol = exact_cca(X, Y, p=3)
    np.testing.assert_allclose(sol.correlations[:2], [0.9, 0.5], atol=0.05)
    assert sol.correlations[2] < 0.1


def test_synthesis_rejects_bad_targets():
    for sig in [[0.5, 0.9], [1.2], [0.0], []]:
        with pytest.raises(DimensionError):
            synthesize_cca(100, 4, 3, sig)
    with pytest.raises(DimensionError):
        synthesize_cca(3, 4, 3, [0.5])
    with pytest.raises(DimensionError):
        synthesize_fda(10, 3, n_classes=1)
