import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from clustermg import (FeatureMatrix, RidgeOperator, csr_from_triplets, gram_diagonal, ridge_apply,
                       spmv, spmv_transpose)
from conftest import random_matrix


def test_triplets_diagonal():
    X = csr_from_triplets(2, 2, [(0, 0, 1.0), (1, 1, 2.0)])
    np.testing.assert_array_equal(X.toarray(), np.diag([1.0, 2.0]))


def test_triplets_duplicates_summed():
    X = csr_from_triplets(2, 2, [(0, 0, 1.0), (0, 0, 1.0)])
    assert X.nnz == 1
    assert X.toarray()[0, 0] == 2.0


def test_triplets_random_matches_dense_accumulation(rng):
    entries = [(int(rng.integers(5)), int(rng.integers(4)), float(rng.standard_normal()))
               for _ in range(30)]
    dense = np.zeros((5, 4))
    for i, j, v in entries:
        dense[i, j] += v
    np.testing.assert_allclose(csr_from_triplets(5, 4, entries).toarray(), dense, rtol=0, atol=1e-14)


def test_triplets_errors():
    with pytest.raises(IndexError):
        csr_from_triplets(2, 2, [(2, 0, 1.0)])
    with pytest.raises(IndexError):
        csr_from_triplets(2, 2, [(0, -1, 1.0)])
    with pytest.raises(ValueError):
        csr_from_triplets(2, 2, [(0, 0, np.nan)])
    with pytest.raises(ValueError):
        csr_from_triplets(2, 2, [(0, 0, np.inf)])


def test_from_arrays_validates():
    X = FeatureMatrix.from_arrays(2, 3, [0, 1, 2], [2, 0], [1.0, 4.0])
    np.testing.assert_array_equal(X.toarray(), [[0, 0, 1], [4, 0, 0]])
    with pytest.raises(ValueError):
        FeatureMatrix.from_arrays(2, 3, [0, 2, 1], [2, 0], [1.0, 4.0])
    with pytest.raises((ValueError, IndexError)):
        FeatureMatrix.from_arrays(2, 3, [0, 1, 2], [3, 0], [1.0, 4.0])


def test_immutable():
    X = FeatureMatrix.from_dense(np.eye(2))
    with pytest.raises(ValueError):
        X.values[0] = 5.0


def test_spmv_trivial():
    I = FeatureMatrix.from_dense(np.eye(3))
    np.testing.assert_array_equal(spmv(I, [1.0, 2.0, 3.0]), [1, 2, 3])
    D = FeatureMatrix.from_dense(np.diag([1.0, 2.0]))
    np.testing.assert_array_equal(spmv(D, [1.0, 1.0]), [1, 2])
    np.testing.assert_array_equal(spmv_transpose(I, [1.0, 2.0, 3.0]), [1, 2, 3])
    np.testing.assert_array_equal(spmv_transpose(D, [1.0, 1.0]), [1, 2])


def test_spmv_dense_oracle(rng):
    X = random_matrix(rng, 6, 5)
    v, u = rng.standard_normal(5), rng.standard_normal(6)
    np.testing.assert_allclose(spmv(X, v), X.toarray() @ v, rtol=0, atol=1e-14)
    np.testing.assert_allclose(spmv_transpose(X, u), X.toarray().T @ u, rtol=0, atol=1e-14)


def test_spmv_dimension_mismatch():
    X = FeatureMatrix.from_dense(np.ones((3, 2)))
    with pytest.raises(ValueError):
        spmv(X, np.ones(3))
    with pytest.raises(ValueError):
        spmv_transpose(X, np.ones(2))
    with pytest.raises(ValueError):
        ridge_apply(RidgeOperator(X, 1.0), np.ones(3))


def test_ridge_apply_trivial():
    op = RidgeOperator(FeatureMatrix.from_dense(np.diag([1.0, 2.0])), 1.0)
    np.testing.assert_array_equal(ridge_apply(op, np.ones(2)), [2, 5])
    w = np.array([0.3, -1.0, 2.0])
    np.testing.assert_array_equal(ridge_apply(RidgeOperator(FeatureMatrix.from_dense(np.eye(3)), 0.0), w), w)


def test_ridge_apply_dense_gram(rng):
    X = random_matrix(rng, 8, 6)
    op = RidgeOperator(X, 1e-3)
    w = rng.standard_normal(6)
    ref = (X.toarray().T @ X.toarray() + 1e-3 * np.eye(6)) @ w
    assert np.linalg.norm(ridge_apply(op, w) - ref) <= 1e-12 * np.linalg.norm(ref)


def test_gram_diagonal():
    op = RidgeOperator(FeatureMatrix.from_dense(np.diag([1.0, 2.0])), 1.0)
    np.testing.assert_array_equal(gram_diagonal(op), [2, 5])
    Z = FeatureMatrix.from_dense(np.array([[1.0, 0.0], [2.0, 0.0]]))
    assert gram_diagonal(RidgeOperator(Z, 1e-6))[1] == 1e-6


def test_gram_diagonal_dense_oracle(rng):
    X = random_matrix(rng, 7, 9)
    d = gram_diagonal(RidgeOperator(X, 0.5))
    np.testing.assert_allclose(d, np.diag(X.toarray().T @ X.toarray()) + 0.5, rtol=0, atol=1e-14)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 12), st.integers(1, 12), st.floats(1e-8, 10.0), st.integers(0, 2**31 - 1))
def test_ridge_properties(n, f, beta, seed):
    rng = np.random.default_rng(seed)
    X = random_matrix(rng, n, f, density=0.5)
    op = RidgeOperator(X, beta)
    u, v = rng.standard_normal(f), rng.standard_normal(f)
    Au, Av = ridge_apply(op, u), ridge_apply(op, v)
    scale = np.linalg.norm(Au) * np.linalg.norm(v) + 1e-300
    assert abs(Au @ v - u @ Av) <= 1e-12 * scale
    assert Av @ v >= beta * (v @ v) * (1 - 1e-12)
    assert np.all(gram_diagonal(op) >= beta)
    G = X.toarray().T @ X.toarray()
    ref = G @ v
    np.testing.assert_allclose(spmv_transpose(X, spmv(X, v)), ref, rtol=1e-12,
                               atol=1e-12 * (np.linalg.norm(ref) + 1e-300))


def test_operator_is_linear_operator(rng):
    X = random_matrix(rng, 5, 4)
    op = RidgeOperator(X, 0.1)
    np.testing.assert_allclose(op.to_dense(), X.toarray().T @ X.toarray() + 0.1 * np.eye(4), atol=1e-14)
    np.testing.assert_allclose(op.diagonal(), np.diag(op.to_dense()), atol=1e-14)
