"""Two-level and multilevel preconditioners built from feature clusterings."""
from __future__ import annotations

import os
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg as sla
from scipy.sparse.linalg import LinearOperator

from .clustering import ClusterAssignment, cluster
from .coarsening import CoarseLevel, Prolongation, build_prolongation, coarsen
from .krylov import SolverConfig, cg, estimate_lambda_max, fcg, fgmres
from .sparse import FeatureMatrix, RidgeOperator, spmv_transpose

METHODS = ("cg", "jacobi_cg", "fcg_twolevel", "fcg_multilevel", "fgmres_twolevel")


def direct_cap() -> int:
    """Largest coarsest level solved by dense Cholesky (env ``CLUSTERMG_DIRECT_CAP``)."""
    return int(os.environ.get("CLUSTERMG_DIRECT_CAP", 4096))


class CoarseSolveError(RuntimeError):
    pass


def auto_omega(X: FeatureMatrix, beta: float, seed=0) -> float:
    """omega = 2 / (beta + lambda_max(X^T X)), lambda_max by power iteration."""
    gram = LinearOperator((X.n_features, X.n_features), dtype=np.float64,
                          matvec=lambda v: X.csr.T @ (X.csr @ np.ravel(v)))
    lam = estimate_lambda_max(gram, X.n_features, tol=1e-4, max_iters=200, seed=seed)
    return 2.0 / (beta + lam)


class CholeskySolver:
    """Dense Cholesky factorization of a (coarsest) ridge operator, computed once."""

    def __init__(self, op: RidgeOperator, level=None):
        self.op = op
        try:
            self.factor = sla.cho_factor(op.to_dense(), lower=True)
        except np.linalg.LinAlgError as exc:
            where = f" on level {level}" if level is not None else ""
            raise CoarseSolveError(
                f"Cholesky failed{where} ({op.shape[0]} features, beta={op.beta:g}): operator is "
                "numerically indefinite; try a larger beta or a smaller coarse size") from exc

    def solve(self, rhs, stats=None):
        return sla.cho_solve(self.factor, rhs)


class IterativeSolver:
    """Inexact inner solve with CG or FCG, optionally preconditioned."""

    def __init__(self, op: RidgeOperator, method="fcg", tol=1e-6, max_iters=1000, m=20,
                 preconditioner=None):
        if method not in ("cg", "fcg"):
            raise ValueError(f"inner solver must be 'cg' or 'fcg', got {method!r}")
        self.op = op
        self.method = method
        self.config = SolverConfig(tol=tol, max_iters=max_iters, m=m)
        self.preconditioner = preconditioner

    def solve(self, rhs, stats=None):
        if self.method == "cg" and self.preconditioner is None:
            x, rep = cg(self.op, rhs, self.config)
        else:
            x, rep = fcg(self.op, rhs, self.config, self.preconditioner)
        if stats is not None:
            stats.append(rep.iterations)
        return x


class TwoLevelPreconditioner:
    """z = P e_c + omega (r - A P e_c) with e_c = A_c^{-1} P^T r.

    Coarse-grid correction followed by one Richardson post-smoothing step.
    The result is not symmetric, so it has to drive a flexible Krylov method.
    """

    def __init__(self, A: RidgeOperator, prolongation: Prolongation, coarse_solver, omega: float):
        if not omega > 0:
            raise ValueError("omega must be positive")
        if prolongation.n_fine != A.shape[0]:
            raise ValueError("prolongation does not match the fine operator")
        self.A = A
        self.P = prolongation
        self.coarse_solver = coarse_solver
        self.omega = float(omega)

    @property
    def shape(self):
        return self.A.shape

    def apply(self, r, stats=None):
        r = np.asarray(r, dtype=np.float64)
        try:
            ec = self.coarse_solver.solve(self.P.restrict(r), stats)
        except CoarseSolveError:
            raise
        except Exception as exc:  # keep the level context on inner failures
            raise CoarseSolveError(f"coarse solve failed: {exc}") from exc
        z1 = self.P.prolong(ec)
        return z1 + self.omega * (r - self.A.matvec(z1))

    def matvec(self, r):
        return self.apply(r)

    __call__ = matvec

    def aslinearoperator(self) -> LinearOperator:
        return LinearOperator(self.shape, matvec=self.apply, dtype=np.float64)


@dataclass(frozen=True)
class LevelSpec:
    """How to build the next-coarser level and how to solve on it.

    ``coarse_solver`` is ``cholesky`` for the coarsest level and ``fcg`` or
    ``cg`` for intermediate ones. ``assignment`` bypasses clustering.
    """

    clustering: str = "lf"
    n_clusters: int | None = None
    tolerance: float | None = None
    distance: str = "euclidean"
    seed: int = 0
    interpolation: str = "adjusted_average"
    n_interp: int = 1
    n_vectors: int = 16
    coarse_solver: str = "cholesky"
    inner_tol: float = 1e-6
    inner_max_iters: int = 1000
    m: int = 20
    beta: float | None = None
    omega: float | None = None
    assignment: ClusterAssignment | None = field(default=None, compare=False, repr=False)


@dataclass
class Level:
    matrix: FeatureMatrix
    operator: RidgeOperator
    prolongation: Prolongation | None = None
    assignment: ClusterAssignment | None = None
    omega: float | None = None
    spec: LevelSpec | None = None


@dataclass
class LevelHierarchy:
    levels: list
    preconditioner: TwoLevelPreconditioner

    @property
    def sizes(self):
        return [lvl.matrix.n_features for lvl in self.levels]

    def __len__(self):
        return len(self.levels)


def build_two_level(X: FeatureMatrix, beta: float, P: Prolongation, omega=None, seed=0,
                    coarse_beta=None) -> TwoLevelPreconditioner:
    """Two-level preconditioner with an exact Cholesky coarse solve."""
    A = RidgeOperator(X, beta)
    coarse = coarsen(X, P, beta if coarse_beta is None else coarse_beta)
    omega = auto_omega(X, beta, seed) if omega is None else omega
    return TwoLevelPreconditioner(A, P, CholeskySolver(coarse.operator(), level=1), omega)


def build_hierarchy(X: FeatureMatrix, beta: float, level_specs, seed=0) -> LevelHierarchy:
    """Cluster and coarsen repeatedly, then wire the preconditioners bottom-up.

    Level l+1 is built from level l with ``level_specs[l]``; the last spec
    must request the Cholesky solve.
    """
    level_specs = list(level_specs)
    if not level_specs:
        raise ValueError("at least one level spec is required")
    for k, s in enumerate(level_specs):
        last = k == len(level_specs) - 1
        if last and s.coarse_solver != "cholesky":
            raise ValueError("the coarsest level must use coarse_solver='cholesky'")
        if not last and s.coarse_solver not in ("fcg", "cg"):
            raise ValueError(f"level {k + 1}: intermediate levels need coarse_solver 'fcg' or 'cg'")

    levels = [Level(X, RidgeOperator(X, beta))]
    for k, spec in enumerate(level_specs):
        fine = levels[-1]
        Xf = fine.matrix
        a = spec.assignment
        if a is None:
            a = cluster(Xf, spec.clustering, n_clusters=spec.n_clusters, tolerance=spec.tolerance,
                        distance=spec.distance, seed=spec.seed)
        if a.n_features != Xf.n_features:
            raise ValueError(f"level {k + 1}: assignment covers {a.n_features} features, "
                             f"level has {Xf.n_features}")
        if a.n_clusters >= Xf.n_features:
            raise ValueError(f"level {k + 1}: coarse size {a.n_clusters} must be smaller than "
                             f"{Xf.n_features}")
        P = build_prolongation(Xf, a, fine.operator.beta, spec.interpolation, spec.n_interp,
                               spec.n_vectors, spec.distance)
        cbeta = fine.operator.beta if spec.beta is None else spec.beta
        coarse: CoarseLevel = coarsen(Xf, P, cbeta, fine.operator.regularizer)
        fine.prolongation = P
        fine.assignment = a
        fine.spec = spec
        fine.omega = auto_omega(Xf, fine.operator.beta, seed) if spec.omega is None else spec.omega
        levels.append(Level(coarse.coarse_matrix, coarse.operator()))

    if levels[-1].matrix.n_features > direct_cap():
        raise ValueError(f"coarsest level has {levels[-1].matrix.n_features} features, above the "
                         f"direct-solve cap {direct_cap()}")

    solver = CholeskySolver(levels[-1].operator, level=len(levels) - 1)
    precond = None
    for k in range(len(levels) - 2, -1, -1):
        lvl = levels[k]
        precond = TwoLevelPreconditioner(lvl.operator, lvl.prolongation, solver, lvl.omega)
        if k > 0:
            spec = levels[k - 1].spec
            inner_pre = precond if spec.coarse_solver == "fcg" else None
            solver = IterativeSolver(lvl.operator, spec.coarse_solver, spec.inner_tol,
                                     spec.inner_max_iters, spec.m, inner_pre)
    return LevelHierarchy(levels, precond)


def solve_system(X: FeatureMatrix, beta: float, b, method="cg", config: SolverConfig = SolverConfig(),
                 level_specs=None, hierarchy: LevelHierarchy | None = None):
    """Solve (X^T X + beta I) w = X^T b with the chosen method.

    Two-level and multilevel methods take ``level_specs`` (or a prebuilt
    ``hierarchy``). Returns ``(w, SolveReport)``.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; choose from {METHODS}")
    rhs = spmv_transpose(X, b)
    A = RidgeOperator(X, beta)
    if method == "cg":
        return cg(A, rhs, config)
    if method == "jacobi_cg":
        return cg(A, rhs, config, M_diag=A.diagonal())
    if hierarchy is None:
        if not level_specs:
            raise ValueError(f"{method} needs level_specs or a hierarchy")
        level_specs = list(level_specs)
        if method != "fcg_multilevel" and len(level_specs) != 1:
            raise ValueError(f"{method} takes exactly one level spec")
        if config.omega is not None:
            level_specs[0] = replace(level_specs[0], omega=config.omega)
        hierarchy = build_hierarchy(X, beta, level_specs, seed=config.seed)
    M = hierarchy.preconditioner
    if method == "fgmres_twolevel":
        w, rep = fgmres(A, rhs, config, M)
    else:
        w, rep = fcg(A, rhs, config, M)
    rep.method = method
    return w, rep
