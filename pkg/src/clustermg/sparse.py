"""Sparse feature-matrix storage and the implicit ridge operator.

The feature matrix ``X`` (samples x features) is the only large object kept in
memory. Everything downstream talks to it through ``X @ v`` and ``X.T @ u``;
``X.T @ X`` is never formed.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator


class FeatureMatrix:
    """Immutable CSR matrix over samples.

    Rows are samples, columns are features. Column indices are sorted within
    each row and duplicates are not allowed.
    """

    def __init__(self, csr):
        csr = sp.csr_matrix(csr, dtype=np.float64)
        if not csr.has_canonical_format:
            csr = csr.copy()
            csr.sum_duplicates()
        csr.indptr.setflags(write=False)
        csr.indices.setflags(write=False)
        csr.data.setflags(write=False)
        self._csr = csr

    @classmethod
    def from_arrays(cls, n_samples, n_features, row_offsets, column_indices, values):
        row_offsets = np.asarray(row_offsets, dtype=np.int64)
        column_indices = np.asarray(column_indices, dtype=np.int64)
        values = np.asarray(values, dtype=np.float64)
        if row_offsets.shape != (n_samples + 1,):
            raise ValueError(f"row_offsets must have length {n_samples + 1}")
        if row_offsets[0] != 0 or np.any(np.diff(row_offsets) < 0):
            raise ValueError("row_offsets must start at 0 and be non-decreasing")
        if row_offsets[-1] != len(column_indices) or len(values) != len(column_indices):
            raise ValueError("row_offsets[-1] must equal nnz")
        if len(column_indices) and (column_indices.min() < 0 or column_indices.max() >= n_features):
            raise ValueError("column index out of range")
        for i in range(n_samples):
            cols = column_indices[row_offsets[i]:row_offsets[i + 1]]
            if np.any(np.diff(cols) <= 0):
                raise ValueError(f"row {i}: column indices must be strictly increasing")
        csr = sp.csr_matrix((values, column_indices, row_offsets), shape=(n_samples, n_features))
        return cls(csr)

    @classmethod
    def from_dense(cls, array):
        return cls(sp.csr_matrix(np.asarray(array, dtype=np.float64)))

    @property
    def csr(self) -> sp.csr_matrix:
        return self._csr

    @property
    def shape(self):
        return self._csr.shape

    @property
    def n_samples(self) -> int:
        return self._csr.shape[0]

    @property
    def n_features(self) -> int:
        return self._csr.shape[1]

    @property
    def nnz(self) -> int:
        return self._csr.nnz

    @property
    def row_offsets(self):
        return self._csr.indptr

    @property
    def column_indices(self):
        return self._csr.indices

    @property
    def values(self):
        return self._csr.data

    def column_sq_norms(self) -> np.ndarray:
        """Squared Euclidean norm of every column, one pass over the nonzeros."""
        out = np.zeros(self.n_features)
        np.add.at(out, self._csr.indices, self._csr.data ** 2)
        return out

    def toarray(self) -> np.ndarray:
        return self._csr.toarray()

    def __matmul__(self, v):
        return spmv(self, v)

    def __repr__(self):
        return f"FeatureMatrix(n_samples={self.n_samples}, n_features={self.n_features}, nnz={self.nnz})"


def csr_from_triplets(n_samples, n_features, entries) -> FeatureMatrix:
    """Assemble a FeatureMatrix from ``(row, col, value)`` triplets.

    Duplicate coordinates are summed.
    """
    entries = list(entries)
    if entries:
        rows, cols, vals = (np.asarray(a) for a in zip(*entries))
    else:
        rows = cols = np.empty(0, dtype=np.int64)
        vals = np.empty(0)
    rows = rows.astype(np.int64)
    cols = cols.astype(np.int64)
    vals = vals.astype(np.float64)
    if np.any((rows < 0) | (rows >= n_samples)):
        raise IndexError("row index out of range")
    if np.any((cols < 0) | (cols >= n_features)):
        raise IndexError("column index out of range")
    if not np.all(np.isfinite(vals)):
        raise ValueError("non-finite value in triplets")
    coo = sp.coo_matrix((vals, (rows, cols)), shape=(n_samples, n_features))
    return FeatureMatrix(coo.tocsr())


def _check_len(v, n, what):
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (n,):
        raise ValueError(f"{what}: expected vector of length {n}, got shape {v.shape}")
    return v


def spmv(X: FeatureMatrix, v) -> np.ndarray:
    """y = X v."""
    v = _check_len(v, X.n_features, "spmv")
    return X.csr @ v


def spmv_transpose(X: FeatureMatrix, u) -> np.ndarray:
    """y = X^T u, scattered over rows (the transpose is a CSC view, not a copy)."""
    u = _check_len(u, X.n_samples, "spmv_transpose")
    return X.csr.T @ u


class RidgeOperator(LinearOperator):
    """The SPD operator ``w -> X^T (X w) + beta * G w``.

    ``G`` is the identity unless ``regularizer`` is given; Galerkin coarse
    levels built from a prolongation with ``P^T P != I`` carry ``G = P^T P``
    as a small dense matrix.
    """

    def __init__(self, matrix: FeatureMatrix, beta: float, regularizer=None):
        if beta < 0:
            raise ValueError("beta must be nonnegative")
        n = matrix.n_features
        if regularizer is not None:
            regularizer = np.asarray(regularizer, dtype=np.float64)
            if regularizer.shape != (n, n):
                raise ValueError(f"regularizer must be {n}x{n}")
        self.matrix = matrix
        self.beta = float(beta)
        self.regularizer = regularizer
        super().__init__(dtype=np.float64, shape=(n, n))

    def _matvec(self, w):
        w = np.asarray(w, dtype=np.float64).ravel()
        return ridge_apply(self, w)

    def _rmatvec(self, w):
        return self._matvec(w)

    def diagonal(self) -> np.ndarray:
        return gram_diagonal(self)

    def to_dense(self) -> np.ndarray:
        """Dense ``X^T X + beta G``; small instances and the coarsest level only."""
        Xd = self.matrix.csr
        A = (Xd.T @ Xd).toarray()
        if self.regularizer is None:
            A[np.diag_indices_from(A)] += self.beta
        else:
            A += self.beta * self.regularizer
        return A


def ridge_apply(op: RidgeOperator, w) -> np.ndarray:
    """(X^T X + beta G) w in two sparse passes."""
    X = op.matrix
    w = _check_len(w, X.n_features, "ridge_apply")
    out = X.csr.T @ (X.csr @ w)
    if op.regularizer is None:
        out += op.beta * w
    else:
        out += op.beta * (op.regularizer @ w)
    return out


def gram_diagonal(op: RidgeOperator) -> np.ndarray:
    """diag(X^T X) + beta * diag(G)."""
    d = op.matrix.column_sq_norms()
    if op.regularizer is None:
        return d + op.beta
    return d + op.beta * np.diag(op.regularizer)
