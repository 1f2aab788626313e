"""Prolongation operators and Galerkin coarse levels built from feature clusters."""
from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .clustering import ClusterAssignment, _Columns
from .sparse import FeatureMatrix, RidgeOperator

VARIANTS = ("adjusted_average", "plain_average", "least_squares_a", "least_squares_b")


def dense_cap() -> int:
    """Largest feature count the dense analysis paths accept (env ``CLUSTERMG_DENSE_CAP``)."""
    return int(os.environ.get("CLUSTERMG_DENSE_CAP", 8192))


class DenseCapExceeded(ValueError):
    pass


@dataclass(frozen=True)
class Prolongation:
    """Sparse F x F_C interpolation; rows are fine features, columns clusters."""

    matrix: sp.csr_matrix
    variant: str
    fallback_rows: int = 0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown prolongation variant {self.variant!r}")
        object.__setattr__(self, "matrix", sp.csr_matrix(self.matrix, dtype=np.float64))

    @property
    def n_fine(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_coarse(self) -> int:
        return self.matrix.shape[1]

    @property
    def is_orthonormal(self) -> bool:
        return self.variant == "adjusted_average"

    def prolong(self, e):
        return self.matrix @ e

    def restrict(self, r):
        return self.matrix.T @ r

    def gram(self) -> np.ndarray:
        """Dense P^T P."""
        return (self.matrix.T @ self.matrix).toarray()

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()


def _aggregate(assignment: ClusterAssignment, weights, variant) -> Prolongation:
    m = assignment.membership
    F, Fc = len(m), assignment.n_clusters
    sizes = assignment.sizes
    if np.any(sizes == 0):
        raise ValueError("empty cluster")
    P = sp.csr_matrix((weights(sizes)[m], (np.arange(F), m)), shape=(F, Fc))
    return Prolongation(P, variant)


def build_adjusted_average(assignment: ClusterAssignment) -> Prolongation:
    """Row i holds 1/sqrt(n_S) in the column of its cluster S, so P^T P = I."""
    return _aggregate(assignment, lambda n: 1.0 / np.sqrt(n), "adjusted_average")


def build_plain_average(assignment: ClusterAssignment) -> Prolongation:
    """Unnormalized averaging (1/n_S); P^T P = diag(1/n_S) is not the identity."""
    return _aggregate(assignment, lambda n: 1.0 / n, "plain_average")


@dataclass(frozen=True)
class CoarseLevel:
    """X_c = X P together with the Galerkin regularizer.

    The coarse operator is ``X_c^T X_c + beta * G`` with ``G = P^T G_fine P``;
    ``galerkin_correction`` is None when that product is the identity.
    """

    coarse_matrix: FeatureMatrix
    prolongation: Prolongation
    beta: float
    galerkin_correction: np.ndarray | None = None

    def operator(self, beta=None) -> RidgeOperator:
        return RidgeOperator(self.coarse_matrix, self.beta if beta is None else beta,
                             self.galerkin_correction)


def coarsen(X: FeatureMatrix, P: Prolongation, beta: float, fine_regularizer=None) -> CoarseLevel:
    """Galerkin coarse level: X_c = X P and G_c = P^T G P.

    ``fine_regularizer`` is the fine level's G (None = identity), so the
    recursion stays exact on deeper hierarchies.
    """
    if P.n_fine != X.n_features:
        raise ValueError(f"prolongation has {P.n_fine} fine rows, X has {X.n_features} features")
    Xc = X.csr @ P.matrix
    Xc.eliminate_zeros()
    Xc.sort_indices()
    if fine_regularizer is None:
        G = None if P.is_orthonormal else P.gram()
    else:
        G = P.matrix.T @ (P.matrix.T @ np.asarray(fine_regularizer)).T
        G = np.asarray(0.5 * (G + G.T))
    return CoarseLevel(FeatureMatrix(Xc), P, float(beta), G)


# ---------------------------------------------------------------------------
# principal eigenvectors and least-squares interpolation

@dataclass(frozen=True)
class EigenBasis:
    vectors: np.ndarray  # F x K, orthonormal columns
    values: np.ndarray   # eigenvalues of X^T X, descending
    weights: np.ndarray  # eta_k = <(X^T X + beta I) v_k, v_k>


def top_eigenpairs(X: FeatureMatrix, beta: float, n_vectors: int, cap=None) -> EigenBasis:
    """Dominant eigenpairs of X^T X from a dense SVD of X."""
    cap = dense_cap() if cap is None else cap
    N, F = X.shape
    if F > cap:
        raise DenseCapExceeded(f"{F} features exceeds the dense cap {cap}")
    if not 1 <= n_vectors <= min(N, F):
        raise ValueError(f"n_vectors must be in [1, {min(N, F)}]")
    _, s, Vt = np.linalg.svd(X.toarray(), full_matrices=False)
    V = Vt[:n_vectors].T.copy()
    lam = s[:n_vectors] ** 2
    AV = X.csr.T @ (X.csr @ V) + beta * V
    eta = np.einsum("ik,ik->k", AV, V)
    return EigenBasis(V, lam, eta)


def nearest_prototypes(X: FeatureMatrix, assignment: ClusterAssignment, n_interp: int,
                       distance="euclidean") -> np.ndarray:
    """(F, n_interp) cluster ids of the closest prototypes, ties to the lowest id."""
    protos = assignment.prototype_index
    cols = _Columns(X)
    F = X.n_features
    out = np.empty((F, n_interp), dtype=np.int64)
    for s in range(0, F, 1024):
        blk = np.arange(s, min(F, s + 1024))
        d = cols.distances(blk, distance, protos)
        out[blk] = np.argsort(d, axis=1, kind="stable")[:, :n_interp]
    return out


def build_ls_interpolation(basis: EigenBasis, assignment: ClusterAssignment, n_interp: int,
                           variant: str, X: FeatureMatrix, beta: float,
                           distance="euclidean", rcond=1e-12) -> Prolongation:
    """Least-squares interpolation of the principal eigenvectors.

    Row i minimizes sum_k eta_k (t_k(i) - sum_{j in C_i} p_ij v_k(j))^2 over
    the ``n_interp`` nearest prototypes C_i, with t_k(i) = v_k(i) for variant
    ``a`` and t_k(i) = (1 - lambda_k / (|X(:,i)|^2 + beta)) v_k(i) for ``b``.
    Prototype rows interpolate themselves with weight 1. A singular local
    system falls back to the adjusted-average row.
    """
    if variant not in ("a", "b"):
        raise ValueError("variant must be 'a' or 'b'")
    if not assignment.has_feature_prototypes:
        raise ValueError("least-squares interpolation needs prototypes that are original features")
    if n_interp < 1:
        raise ValueError("n_interp must be >= 1")
    F = X.n_features
    Fc = assignment.n_clusters
    n_interp = min(n_interp, Fc)
    V, lam, eta = basis.vectors, basis.values, basis.weights
    protos = assignment.prototype_index
    m = assignment.membership
    sizes = assignment.sizes
    diag = X.column_sq_norms() + beta
    C = nearest_prototypes(X, assignment, n_interp, distance)
    is_proto = np.zeros(F, dtype=bool)
    is_proto[protos] = True

    rows, cols, vals = [], [], []
    fallbacks = 0
    for i in range(F):
        if is_proto[i]:
            rows.append(i)
            cols.append(m[i])
            vals.append(1.0)
            continue
        Ci = C[i]
        B = V[protos[Ci], :].T              # K x |C_i|
        t = V[i, :].copy()
        if variant == "b":
            t *= 1.0 - lam / diag[i]
        BW = B.T * eta
        M = BW @ B
        try:
            if np.linalg.cond(M) > 1.0 / rcond:
                raise np.linalg.LinAlgError
            w = sla.solve(M, BW @ t, assume_a="sym")
        except (np.linalg.LinAlgError, sla.LinAlgError):
            fallbacks += 1
            rows.append(i)
            cols.append(m[i])
            vals.append(1.0 / np.sqrt(sizes[m[i]]))
            continue
        rows.extend([i] * len(Ci))
        cols.extend(Ci.tolist())
        vals.extend(w.tolist())
    P = sp.csr_matrix((vals, (rows, cols)), shape=(F, Fc))
    P.sum_duplicates()
    return Prolongation(P, "least_squares_" + variant, fallbacks)


def build_prolongation(X: FeatureMatrix, assignment: ClusterAssignment, beta: float,
                       variant="adjusted_average", n_interp=1, n_vectors=16,
                       distance="euclidean") -> Prolongation:
    """Build any supported prolongation variant from an assignment."""
    if variant == "adjusted_average":
        return build_adjusted_average(assignment)
    if variant == "plain_average":
        return build_plain_average(assignment)
    if variant in ("least_squares_a", "least_squares_b", "a", "b"):
        v = variant[-1]
        k = min(n_vectors, *X.shape)
        basis = top_eigenpairs(X, beta, k)
        return build_ls_interpolation(basis, assignment, n_interp, v, X, beta, distance)
    raise ValueError(f"unknown prolongation variant {variant!r}")
