"""Sparse storage helpers and the linear solvers used by the driver.

Matrices are ``scipy.sparse.csr_matrix``. The iterative solver is a
Jacobi-preconditioned conjugate gradient method written out here so that
breakdown and stagnation are reported precisely. Small systems use a
dense LU factorisation and moderate ones SuperLU.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import BreakdownError, ConfigError, NotConvergedError, SingularMatrixError

DENSE_LIMIT = 2000
# sparse LU is used automatically up to this many stored matrix entries
DIRECT_NNZ_LIMIT = 3_000_000


@dataclass
class SolveReport:
    method: str
    iterations: int
    residual: float
    converged: bool
    seconds: float = 0.0


def as_csr(rows, cols, vals, shape) -> sp.csr_matrix:
    """Build a CSR matrix from triplets, summing duplicates."""
    m = sp.csr_matrix((vals, (rows, cols)), shape=shape)
    m.sum_duplicates()
    m.sort_indices()
    return m


def _operator(A) -> Callable[[np.ndarray], np.ndarray]:
    if callable(A) and not sp.issparse(A) and not isinstance(A, np.ndarray):
        return A
    return lambda v: A @ v


def cg_solve(
    A,
    b: np.ndarray,
    tol: float = 1e-10,
    maxit: int | None = None,
    precond: str | np.ndarray | None = "jacobi",
    x0: np.ndarray | None = None,
    callback: Callable[[np.ndarray], None] | None = None,
) -> tuple[np.ndarray, SolveReport]:
    """Preconditioned conjugate gradients for symmetric positive definite ``A``.

    ``A`` is a sparse or dense matrix or a callable computing ``A @ v``.
    ``precond`` may be ``"jacobi"``, ``None`` or an explicit array holding the
    inverse diagonal. Stops when ``||b - A x|| <= tol * ||b||``; raises
    :class:`BreakdownError` on non-positive curvature and
    :class:`NotConvergedError` when ``maxit`` is exhausted.
    """
    if not tol > 0:
        raise ConfigError("tolerance must be positive")
    t0 = time.perf_counter()
    b = np.asarray(b, dtype=np.float64)
    n = b.size
    apply = _operator(A)
    if isinstance(precond, str):
        if precond != "jacobi":
            raise ConfigError(f"unknown preconditioner {precond!r}")
        diag = np.asarray(A.diagonal(), dtype=np.float64)
        if np.any(diag <= 0):
            raise BreakdownError("matrix has non-positive diagonal entries; not SPD")
        minv = 1.0 / diag
    elif precond is None:
        minv = None
    else:
        minv = np.asarray(precond, dtype=np.float64)
    maxit = 10 * n + 100 if maxit is None else int(maxit)
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=np.float64)
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return np.zeros(n), SolveReport("cg", 0, 0.0, True, time.perf_counter() - t0)
    r = b - apply(x) if x0 is not None else b.copy()
    z = r * minv if minv is not None else r.copy()
    p = z.copy()
    rz = float(r @ z)
    it = restarts = 0
    max_restarts = 5
    rel = float(np.linalg.norm(r)) / bnorm
    while rel > tol:
        if it >= maxit:
            rep = SolveReport("cg", it, rel, False, time.perf_counter() - t0)
            raise NotConvergedError(f"CG did not reach {tol:.1e} in {maxit} iterations (residual {rel:.2e})", rep)
        Ap = apply(p)
        pAp = float(p @ Ap)
        if not pAp > 0:
            rep = SolveReport("cg", it, rel, False, time.perf_counter() - t0)
            raise BreakdownError(f"non-positive curvature {pAp:.3e} at iteration {it}; matrix not SPD", rep)
        step = rz / pAp
        x += step * p
        r -= step * Ap
        it += 1
        if callback is not None:
            callback(x)
        rel = float(np.linalg.norm(r)) / bnorm
        if rel <= tol:
            # the recursive residual drifts; confirm and restart if needed
            r = b - apply(x)
            rel = float(np.linalg.norm(r)) / bnorm
            if rel <= tol:
                break
            restarts += 1
            if restarts > max_restarts:
                rep = SolveReport("cg", it, rel, False, time.perf_counter() - t0)
                raise NotConvergedError(f"CG stagnated at residual {rel:.2e} above {tol:.1e}", rep)
            z = r * minv if minv is not None else r.copy()
            p = z.copy()
            rz = float(r @ z)
            continue
        z = r * minv if minv is not None else r
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    return x, SolveReport("cg", it, rel, True, time.perf_counter() - t0)


def dense_solve(A, b: np.ndarray, rcond_min: float = 1e-14) -> np.ndarray:
    """LU solve with partial pivoting; raises on singular input."""
    M = A.toarray() if sp.issparse(A) else np.asarray(A, dtype=np.float64)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ConfigError("dense solve needs a square matrix")
    try:
        with warnings.catch_warnings():
            # an exactly zero pivot is reported below as an exception
            warnings.simplefilter("ignore", sla.LinAlgWarning)
            lu, piv = sla.lu_factor(M, check_finite=True)
    except (ValueError, sla.LinAlgError) as exc:
        raise SingularMatrixError(f"LU factorisation failed: {exc}") from exc
    d = np.abs(np.diag(lu))
    scale = max(float(np.abs(M).max()), 1e-300)
    if d.min() <= rcond_min * scale:
        raise SingularMatrixError(f"matrix is singular to working precision (pivot {d.min():.3e})")
    return sla.lu_solve((lu, piv), b)


def solve_system(
    K: sp.csr_matrix,
    f: np.ndarray,
    constraint: np.ndarray | None = None,
    tol: float = 1e-10,
    maxit: int | None = None,
    method: str = "auto",
) -> tuple[np.ndarray, SolveReport]:
    """Solve ``K u = f``, optionally with ``constraint . u = 0``.

    ``method`` is ``"cg"``, ``"dense"``, ``"direct"`` (sparse LU) or
    ``"auto"``: dense below ``DENSE_LIMIT`` unknowns, sparse LU up to
    ``DIRECT_NNZ_LIMIT`` stored entries, CG beyond. Constrained solves
    work with ``K + beta c c^T``, which is positive definite whenever the
    constraint is not orthogonal to the null space of ``K``, and then
    remove the component along the multiplier direction.
    """
    t0 = time.perf_counter()
    n = f.size
    if method not in ("auto", "cg", "dense", "direct"):
        raise ConfigError(f"unknown solver {method!r}")
    if method == "auto":
        if n <= DENSE_LIMIT:
            method = "dense"
        elif K.nnz <= DIRECT_NNZ_LIMIT:
            method = "direct"
        else:
            method = "cg"
    if method == "dense":
        if constraint is None:
            u = dense_solve(K, f)
        else:
            c = np.asarray(constraint, dtype=np.float64)
            M = np.zeros((n + 1, n + 1))
            M[:n, :n] = K.toarray() if sp.issparse(K) else K
            M[:n, n] = c
            M[n, :n] = c
            sol = dense_solve(M, np.r_[f, 0.0])
            u = sol[:n]
            f = f - sol[n] * c
        res = float(np.linalg.norm(K @ u - f) / max(np.linalg.norm(f), 1e-300))
        return u, SolveReport("dense", 1, res, True, time.perf_counter() - t0)
    if method == "direct":
        if constraint is None:
            u = _sparse_lu(K)(f)
        else:
            # bordered saddle-point matrix stays sparse
            c = np.asarray(constraint, dtype=np.float64)
            col = sp.csr_matrix(c[:, None])
            M = sp.bmat([[K, col], [col.T, None]], format="csc")
            sol = _sparse_lu(M)(np.r_[f, 0.0])
            u = sol[:n]
            f = f - sol[n] * c
        res = float(np.linalg.norm(K @ u - f) / max(np.linalg.norm(f), 1e-300))
        return u, SolveReport("direct", 1, res, True, time.perf_counter() - t0)
    if constraint is None:
        return cg_solve(K, f, tol=tol, maxit=maxit)
    c = np.asarray(constraint, dtype=np.float64)
    diag = K.diagonal()
    # put the shifted null direction (near constants) mid-spectrum
    beta = float(diag.mean()) * n / float(c.sum()) ** 2
    aug = lambda v: K @ v + beta * c * (c @ v)  # noqa: E731
    minv = 1.0 / (diag + beta * c * c)
    u1, r1 = cg_solve(aug, f, tol=tol, maxit=maxit, precond=minv)
    u2, r2 = cg_solve(aug, c, tol=tol, maxit=maxit, precond=minv)
    lam = float(c @ u1) / float(c @ u2)
    u = u1 - lam * u2
    res = float(np.linalg.norm(K @ u + lam * c - f) / max(np.linalg.norm(f), 1e-300))
    its = r1.iterations + r2.iterations
    return u, SolveReport("cg+constraint", its, res, True, time.perf_counter() - t0)


def _sparse_lu(K) -> Callable[[np.ndarray], np.ndarray]:
    try:
        return spla.splu(sp.csc_matrix(K), permc_spec="COLAMD").solve
    except RuntimeError as exc:
        raise SingularMatrixError(f"sparse LU failed: {exc}") from exc

