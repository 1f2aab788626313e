"""Dense desk-scale diagnostics and method comparison tables."""
from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .clustering import ClusterAssignment
from .coarsening import DenseCapExceeded, Prolongation, dense_cap
from .hierarchy import CoarseSolveError, auto_omega, build_hierarchy, solve_system
from .krylov import BreakdownError, SolverConfig
from .sparse import FeatureMatrix, RidgeOperator


@dataclass(frozen=True)
class SpectralReport:
    rho_eff: float
    f_c: int
    eigenvalue_magnitudes: np.ndarray
    fine_dim: int


def iteration_matrix(X: FeatureMatrix, beta: float, P: Prolongation, omega: float) -> np.ndarray:
    """Dense T = (I - omega A)(I - P A_c^{-1} P^T A), A_c = P^T A P."""
    F = X.n_features
    cap = dense_cap()
    if F > cap:
        raise DenseCapExceeded(f"{F} features exceeds the dense cap {cap}")
    A = RidgeOperator(X, beta).to_dense()
    Pd = P.toarray()
    I = np.eye(F)
    if P.n_coarse == F and np.linalg.matrix_rank(Pd) == F:
        # range(P) is everything: the coarse correction is the zero map
        return np.zeros((F, F))
    Ac = Pd.T @ A @ Pd
    try:
        cf = sla.cho_factor(Ac, lower=True)
        corr = I - Pd @ sla.cho_solve(cf, Pd.T @ A)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError("singular coarse operator P^T A P") from exc
    return (I - omega * A) @ corr


def effective_spectral_radius(X: FeatureMatrix, beta: float, P: Prolongation,
                              omega: float | None = None) -> SpectralReport:
    """F_C-th smallest eigenvalue magnitude of the two-level iteration matrix."""
    omega = auto_omega(X, beta) if omega is None else omega
    T = iteration_matrix(X, beta, P, omega)
    mags = np.sort(np.abs(np.linalg.eigvals(T)))
    fc = P.n_coarse
    return SpectralReport(float(mags[fc - 1]), fc, mags, X.n_features)


@dataclass(frozen=True)
class IdealDataset:
    matrix: FeatureMatrix
    base: FeatureMatrix
    multiplicities: np.ndarray
    assignment: ClusterAssignment


def make_ideal_dataset(base: FeatureMatrix, multiplicities, seed=None, shuffle=True) -> IdealDataset:
    """Duplicate base column i ``multiplicities[i]`` times and shuffle the columns.

    The ground-truth assignment maps every copy to its base column's
    cluster; the prototype of each cluster is its first copy in column order.
    """
    mult = np.asarray(multiplicities, dtype=np.int64)
    if mult.shape != (base.n_features,) or np.any(mult < 1):
        raise ValueError("need one multiplicity >= 1 per base column")
    source = np.repeat(np.arange(base.n_features), mult)
    if shuffle:
        source = np.random.default_rng(seed).permutation(source)
    F = len(source)
    S = sp.csr_matrix((np.ones(F), (source, np.arange(F))), shape=(base.n_features, F))
    X = FeatureMatrix(base.csr @ S)
    protos = np.array([np.flatnonzero(source == s)[0] for s in range(base.n_features)])
    order = np.argsort(protos, kind="stable")
    relabel = np.empty_like(order)
    relabel[order] = np.arange(len(order))
    assignment = ClusterAssignment(relabel[source], prototype_index=protos[order], method="ideal")
    return IdealDataset(X, base, mult, assignment)


def random_ideal_dataset(rng, n_samples, n_base, max_multiplicity=6, density=None) -> IdealDataset:
    """Random Gaussian base columns with random multiplicities (test/CLI helper)."""
    if density is None:
        B = rng.standard_normal((n_samples, n_base))
    else:
        B = sp.random(n_samples, n_base, density=density, random_state=rng,
                      data_rvs=rng.standard_normal).toarray()
        B[rng.integers(n_samples, size=n_base), np.arange(n_base)] += 1.0
    mult = rng.integers(1, max_multiplicity + 1, size=n_base)
    return make_ideal_dataset(FeatureMatrix.from_dense(B), mult, seed=int(rng.integers(2**31)))


# ---------------------------------------------------------------------------
# method comparison

CSV_COLUMNS = ("dataset", "method", "clustering", "F_C", "beta", "tol", "iterations",
               "wall_time_s", "speedup")


@dataclass(frozen=True)
class MethodSpec:
    """One column of a comparison: a solver plus (for preconditioned methods) its levels."""

    method: str
    levels: tuple = ()
    label: str = ""
    m: int = 20

    @property
    def clustering(self) -> str:
        if not self.levels:
            return ""
        return "+".join(s.clustering for s in self.levels)

    @property
    def coarse_sizes(self) -> str:
        return "|".join("" if s.n_clusters is None and s.assignment is None else
                        str(s.assignment.n_clusters if s.assignment is not None else s.n_clusters)
                        for s in self.levels)


@dataclass
class ResultRow:
    dataset: str
    method: str
    clustering: str
    F_C: str
    beta: float
    tol: float
    iterations: int
    wall_time_s: float
    speedup: float = 1.0
    converged: bool = True
    inner_iterations: list = field(default_factory=list)

    def as_csv(self) -> list:
        return [self.dataset, self.method, self.clustering, self.F_C, f"{self.beta:.6g}",
                f"{self.tol:.6g}", self.iterations, f"{self.wall_time_s:.6e}", f"{self.speedup:.6g}"]


def _run_cell(X, b, beta, tol, spec: MethodSpec, n_repeats, max_iters, seed, dataset):
    try:
        return _time_cell(X, b, beta, tol, spec, n_repeats, max_iters, seed, dataset)
    except (BreakdownError, CoarseSolveError) as exc:
        where = f"dataset={dataset or '?'} method={spec.label or spec.method} beta={beta:g} tol={tol:g}"
        raise type(exc)(f"{where}: {exc}") from exc


def _time_cell(X, b, beta, tol, spec: MethodSpec, n_repeats, max_iters, seed, dataset):
    config = SolverConfig(tol=tol, max_iters=max_iters, m=spec.m, seed=seed)
    hierarchy = None
    if spec.method not in ("cg", "jacobi_cg"):
        hierarchy = build_hierarchy(X, beta, spec.levels, seed=seed)
    times, iters, rep = [], None, None
    for _ in range(max(1, n_repeats)):
        t0 = time.perf_counter()
        _, rep = solve_system(X, beta, b, spec.method, config, hierarchy=hierarchy)
        times.append(time.perf_counter() - t0)
        if iters is None:
            iters = rep.iterations
        elif rep.iterations != iters:
            raise RuntimeError(f"{spec.method}: iteration count changed between repeats")
    sizes = "|".join(str(n) for n in hierarchy.sizes[1:]) if hierarchy is not None else ""
    return ResultRow(dataset, spec.label or spec.method, spec.clustering, sizes, beta, tol,
                     iters, float(np.mean(times)), converged=rep.converged,
                     inner_iterations=rep.inner_iteration_counts)


def compare_methods(X: FeatureMatrix, b, beta_grid, tol_grid, method_specs, n_repeats=50,
                    max_iters=5000, seed=0, dataset="", threads=1) -> list:
    """Solve every (beta, tol, method) cell and report iterations, time and speed-up.

    Speed-up is the mean CG wall time of the same (beta, tol) cell divided
    by the method's mean wall time; CG is added as the baseline when absent.
    Rows come back in grid order regardless of ``threads``.
    """
    method_specs = [s if isinstance(s, MethodSpec) else MethodSpec(s) for s in method_specs]
    if not method_specs:
        raise ValueError("method list is empty")
    beta_grid, tol_grid = list(beta_grid), list(tol_grid)
    if not beta_grid or not tol_grid:
        raise ValueError("beta and tol grids must be non-empty")
    specs = list(method_specs)
    if not any(s.method == "cg" and not s.levels for s in specs):
        specs = [MethodSpec("cg")] + specs
    cells = [(beta, tol, s) for beta in beta_grid for tol in tol_grid for s in specs]

    def run(cell):
        beta, tol, s = cell
        return _run_cell(X, b, beta, tol, s, n_repeats, max_iters, seed, dataset)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(run, cells))
    else:
        rows = [run(c) for c in cells]

    baseline = {(r.beta, r.tol): r.wall_time_s for r in rows if r.method == "cg" and not r.clustering}
    for r in rows:
        base = baseline[(r.beta, r.tol)]
        r.speedup = base / r.wall_time_s if r.wall_time_s > 0 else float("inf")
    return rows
