"""Krylov solvers for SPD systems with fixed or variable preconditioning.

All solvers start from x0 = 0 and stop on the relative residual
``|r| / |b| <= tol``.
"""
from __future__ import annotations

import time
import warnings
from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import aslinearoperator


class BreakdownError(RuntimeError):
    """A Krylov recurrence produced a zero or non-finite denominator."""


class NotSPDError(BreakdownError):
    pass


class PowerIterationWarning(UserWarning):
    pass


@dataclass(frozen=True)
class SolverConfig:
    tol: float = 1e-6
    max_iters: int = 1000
    m: int = 20
    omega: float | None = None  # None: 2 / (beta + lambda_max)
    seed: int = 0

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.m < 1:
            raise ValueError("m must be >= 1")
        if self.omega is not None and not self.omega > 0:
            raise ValueError("omega must be positive")


@dataclass
class SolveReport:
    iterations: int = 0
    residual_history: list = field(default_factory=list)
    converged: bool = False
    wall_time: float = 0.0
    inner_iteration_counts: list = field(default_factory=list)
    method: str = ""

    @property
    def final_residual(self) -> float:
        return self.residual_history[-1] if self.residual_history else float("nan")


def _matvec(A):
    if callable(A) and not hasattr(A, "matvec"):
        return A
    return aslinearoperator(A).matvec


def apply_preconditioner(M, r, stats=None):
    """z = M^{-1} r for a preconditioner object, callable, or None."""
    if M is None:
        return r.copy()
    if hasattr(M, "apply"):
        return M.apply(r, stats)
    if hasattr(M, "matvec"):
        return M.matvec(r)
    return M(r)


def _start(b):
    b = np.asarray(b, dtype=np.float64).ravel()
    if not np.all(np.isfinite(b)):
        raise ValueError("right-hand side contains non-finite values")
    return b, float(np.linalg.norm(b))


def cg(A, b, config: SolverConfig = SolverConfig(), M_diag=None):
    """(Jacobi-preconditioned) conjugate gradients.

    ``M_diag`` is the diagonal used for Jacobi scaling; None gives plain CG.
    Returns ``(x, SolveReport)``.
    """
    t0 = time.perf_counter()
    Av = _matvec(A)
    b, bnorm = _start(b)
    x = np.zeros_like(b)
    report = SolveReport(method="jacobi_cg" if M_diag is not None else "cg")
    if bnorm == 0.0:
        report.residual_history.append(0.0)
        report.converged = True
        return x, report
    inv_d = None if M_diag is None else 1.0 / np.asarray(M_diag, dtype=np.float64)
    r = b.copy()
    z = r if inv_d is None else inv_d * r
    p = z.copy()
    rz = r @ z
    report.residual_history.append(1.0)
    for it in range(1, config.max_iters + 1):
        Ap = Av(p)
        pAp = p @ Ap
        if not np.isfinite(pAp):
            raise BreakdownError(f"cg: non-finite <p, Ap> at iteration {it}")
        if pAp <= 0:
            raise NotSPDError(f"cg: <p, Ap> = {pAp:.3e} <= 0 at iteration {it}; operator is not SPD")
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        rel = float(np.linalg.norm(r)) / bnorm
        report.residual_history.append(rel)
        report.iterations = it
        if rel <= config.tol:
            report.converged = True
            break
        z = r if inv_d is None else inv_d * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    report.wall_time = time.perf_counter() - t0
    return x, report


def truncation(i: int, m: int) -> int:
    """Number of previous directions kept at FCG step i: m_0 = 0, m_i = max(1, i mod (m+1))."""
    return 0 if i == 0 else max(1, i % (m + 1))


def fcg(A, b, config: SolverConfig = SolverConfig(), preconditioner=None):
    """Flexible CG with the truncated orthogonalization m_i = max(1, i mod (m+1)).

    The preconditioner may change between iterations (inexact inner
    solves); each step makes the new direction A-orthogonal to the last m_i
    directions and updates x, r with alpha = <p, r> / <p, Ap>.
    """
    t0 = time.perf_counter()
    Av = _matvec(A)
    b, bnorm = _start(b)
    x = np.zeros_like(b)
    report = SolveReport(method="fcg")
    if bnorm == 0.0:
        report.residual_history.append(0.0)
        report.converged = True
        return x, report
    r = b.copy()
    history: deque = deque(maxlen=config.m)
    report.residual_history.append(1.0)
    for i in range(config.max_iters):
        stats: list = []
        z = apply_preconditioner(preconditioner, r, stats)
        if stats:
            report.inner_iteration_counts.append(stats[0] if len(stats) == 1 else list(stats))
        p = z.copy()
        mi = truncation(i, config.m)
        for pk, Apk, pApk in list(history)[max(0, len(history) - mi):] if mi else []:
            p -= ((z @ Apk) / pApk) * pk
        Ap = Av(p)
        pAp = p @ Ap
        if not np.isfinite(pAp) or pAp == 0.0:
            raise BreakdownError(f"fcg: <p, Ap> = {pAp!r} at iteration {i + 1}")
        if pAp < 0:
            raise NotSPDError(f"fcg: <p, Ap> = {pAp:.3e} < 0 at iteration {i + 1}")
        alpha = (p @ r) / pAp
        x += alpha * p
        r -= alpha * Ap
        history.append((p, Ap, pAp))
        rel = float(np.linalg.norm(r)) / bnorm
        report.residual_history.append(rel)
        report.iterations = i + 1
        if rel <= config.tol:
            report.converged = True
            break
    report.wall_time = time.perf_counter() - t0
    return x, report


def fgmres(A, b, config: SolverConfig = SolverConfig(), preconditioner=None):
    """Flexible GMRES without restarts.

    Stores the preconditioned vectors Z and minimizes |beta e1 - H y| with
    Givens rotations, so the recorded residual norms are non-increasing.
    A zero subdiagonal entry (happy breakdown) ends the iteration with the
    exact solution of the current Krylov space.
    """
    t0 = time.perf_counter()
    Av = _matvec(A)
    b, bnorm = _start(b)
    x = np.zeros_like(b)
    report = SolveReport(method="fgmres")
    if bnorm == 0.0:
        report.residual_history.append(0.0)
        report.converged = True
        return x, report
    k_max = config.max_iters
    V = [b / bnorm]
    Z = []
    H = np.zeros((k_max + 1, k_max))
    cs = np.zeros(k_max)
    sn = np.zeros(k_max)
    g = np.zeros(k_max + 1)
    g[0] = bnorm
    report.residual_history.append(1.0)
    k = 0
    for j in range(k_max):
        stats: list = []
        Z.append(apply_preconditioner(preconditioner, V[j], stats))
        if stats:
            report.inner_iteration_counts.append(stats[0] if len(stats) == 1 else list(stats))
        w = Av(Z[j])
        wnorm0 = np.linalg.norm(w)
        for i in range(j + 1):
            H[i, j] = w @ V[i]
            w -= H[i, j] * V[i]
        H[j + 1, j] = np.linalg.norm(w)
        happy = H[j + 1, j] <= 1e-14 * max(wnorm0, 1e-300)
        if not happy:
            V.append(w / H[j + 1, j])
        for i in range(j):
            t = cs[i] * H[i, j] + sn[i] * H[i + 1, j]
            H[i + 1, j] = -sn[i] * H[i, j] + cs[i] * H[i + 1, j]
            H[i, j] = t
        denom = np.hypot(H[j, j], H[j + 1, j])
        if denom == 0.0:
            raise BreakdownError(f"fgmres: rank-deficient Hessenberg matrix at iteration {j + 1}")
        cs[j], sn[j] = H[j, j] / denom, H[j + 1, j] / denom
        H[j, j] = denom
        H[j + 1, j] = 0.0
        g[j + 1] = -sn[j] * g[j]
        g[j] = cs[j] * g[j]
        k = j + 1
        rel = abs(g[j + 1]) / bnorm
        report.residual_history.append(rel)
        if rel <= config.tol or happy:
            report.converged = True
            break
    R = H[:k, :k]
    if np.any(np.abs(np.diag(R)) <= 1e-300):
        raise BreakdownError("fgmres: singular Hessenberg factor")
    y = np.linalg.solve(np.triu(R), g[:k])
    x = np.asarray(Z).T @ y
    report.iterations = k
    report.wall_time = time.perf_counter() - t0
    return x, report


def richardson_step(A, x, b, omega: float):
    """x + omega (b - A x)."""
    if not omega > 0:
        raise ValueError("omega must be positive")
    Av = _matvec(A)
    x = np.asarray(x, dtype=np.float64)
    return x + omega * (np.asarray(b, dtype=np.float64) - Av(x))


def estimate_lambda_max(A, dim: int, tol=1e-4, max_iters=200, seed=0) -> float:
    """Largest eigenvalue of a symmetric PSD operator by power iteration.

    Stops when the Rayleigh quotient changes by at most ``tol`` relative.
    If ``max_iters`` runs out first, the last estimate is returned and a
    ``PowerIterationWarning`` is issued.
    """
    Av = _matvec(A)
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(dim)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(max_iters):
        w = Av(v)
        lam_new = float(v @ w)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        v = w / nw
        if abs(lam_new - lam) <= tol * abs(lam_new):
            return lam_new
        lam = lam_new
    warnings.warn(f"power iteration did not reach tol={tol} in {max_iters} iterations",
                  PowerIterationWarning, stacklevel=2)
    return lam
