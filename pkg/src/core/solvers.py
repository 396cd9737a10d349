#!/usr/bin/env python3
"""
Iterative Solvers Module
Matrix-free conjugate gradients and Lanczos tridiagonalization with full
reorthogonalization. Operators are anything ``scipy.sparse.linalg.aslinearoperator``
accepts: dense arrays, sparse matrices or ``LinearOperator`` closures.
"""

from dataclasses import dataclass
from typing import NamedTuple, Optional, Union

import numpy as np
from scipy.sparse.linalg import LinearOperator, aslinearoperator

from config import config
from .linalg import TriDiag, tridiag_cholesky
from ..utils.exceptions import DataError, DimensionMismatchError, SolverDivergenceError
from ..utils.logger import get_logger

logger = get_logger(__name__)

# Symmetric operator given through its MVMs, or anything convertible to one
MvmOperator = Union[LinearOperator, np.ndarray]


def as_operator(A: MvmOperator) -> LinearOperator:
    """Wrap ``A`` as a square ``LinearOperator``"""
    op = aslinearoperator(A)
    if op.shape[0] != op.shape[1]:
        raise DimensionMismatchError(f"operator must be square, got shape {op.shape}")
    return op


class CGResult(NamedTuple):
    solution: np.ndarray
    converged: bool
    iterations: int
    relative_residual: float


class KrylovSolve(NamedTuple):
    solution: np.ndarray
    relative_residuals: Optional[np.ndarray]


@dataclass(frozen=True, eq=False)
class LanczosFactors:
    """``A ≈ Q T Q^T`` restricted to the Krylov space of the probe"""

    Q: np.ndarray
    T: TriDiag
    k_requested: int
    reorthogonalizations: int = 0

    @property
    def k_effective(self) -> int:
        return self.T.size


def cg_solve(A: MvmOperator, b: np.ndarray, tol: float = None, max_iter: int = None) -> CGResult:
    """
    Conjugate gradients for a symmetric positive definite operator

    Args:
        A: SPD operator
        b: Right-hand side
        tol: Relative residual target ``||Ax - b|| / ||b||``
        max_iter: Iteration cap

    Returns:
        CGResult; when the cap is hit the best iterate is returned with
        ``converged=False``

    Raises:
        SolverDivergenceError: On non-finite values or a non-positive curvature
    """
    tol = config.solver.cg_tol if tol is None else tol
    max_iter = config.solver.cg_max_iter if max_iter is None else max_iter
    op = as_operator(A)

    b = np.asarray(b, dtype=np.float64)
    if b.shape != (op.shape[0],):
        raise DimensionMismatchError(f"operator is {op.shape}, right-hand side has shape {b.shape}")
    if not np.all(np.isfinite(b)):
        raise SolverDivergenceError("right-hand side has non-finite entries")

    b_norm = np.linalg.norm(b)
    x = np.zeros_like(b)
    if b_norm == 0:
        return CGResult(x, True, 0, 0.0)

    r = b.copy()
    p = r.copy()
    rs = r @ r
    best_x, best_residual = x.copy(), 1.0

    for iteration in range(1, max_iter + 1):
        Ap = op.matvec(p)
        curvature = p @ Ap
        if not np.isfinite(curvature) or curvature <= 0:
            raise SolverDivergenceError(
                f"CG met non-positive curvature {curvature:.3e} at iteration {iteration}; operator is not SPD"
            )
        alpha = rs / curvature
        x += alpha * p
        r -= alpha * Ap
        rs_new = r @ r
        if not np.isfinite(rs_new):
            raise SolverDivergenceError(f"CG residual became non-finite at iteration {iteration}")

        relative = np.sqrt(rs_new) / b_norm
        if relative < best_residual:
            best_x, best_residual = x.copy(), relative
        if relative <= tol:
            return CGResult(x, True, iteration, float(relative))

        p = r + (rs_new / rs) * p
        rs = rs_new

    logger.warning(f"CG did not reach tol {tol:.1e} in {max_iter} iterations (best residual {best_residual:.3e})")
    return CGResult(best_x, False, max_iter, float(best_residual))


def lanczos(A: MvmOperator, probe: np.ndarray, k: int, reorth_threshold: float = None,
            breakdown_tol: float = None) -> LanczosFactors:
    """
    k steps of Lanczos tridiagonalization started at ``probe``

    After every step the new vector's overlaps with all previous Lanczos
    vectors are measured; above ``reorth_threshold`` one classical
    Gram-Schmidt pass against all of them is applied, and repeated once if
    the overlap is still too large. If the residual norm falls below
    ``breakdown_tol * ||A||_est`` the Krylov space is invariant and the
    factorization stops early.

    Args:
        A: Symmetric operator
        probe: Nonzero starting vector
        k: Requested number of iterations (capped at the operator size)

    Returns:
        LanczosFactors with ``k_effective <= k`` columns
    """
    reorth_threshold = config.solver.reorth_threshold if reorth_threshold is None else reorth_threshold
    breakdown_tol = config.solver.breakdown_tol if breakdown_tol is None else breakdown_tol
    op = as_operator(A)
    n = op.shape[0]

    probe = np.asarray(probe, dtype=np.float64)
    if probe.shape != (n,):
        raise DimensionMismatchError(f"operator is {op.shape}, probe has shape {probe.shape}")
    probe_norm = np.linalg.norm(probe)
    if not np.isfinite(probe_norm) or probe_norm == 0:
        raise DataError("Lanczos probe vector must be finite and nonzero")
    if k < 1:
        raise DataError(f"Lanczos needs k >= 1, got {k}")
    steps = min(int(k), n)

    Q = np.zeros((n, steps))
    Q[:, 0] = probe / probe_norm
    alphas, betas = [], []
    max_alpha = max_beta = 0.0
    reorthogonalizations = 0

    for j in range(steps):
        w = op.matvec(Q[:, j])
        alpha = Q[:, j] @ w
        if not np.isfinite(alpha):
            raise SolverDivergenceError(f"Lanczos produced a non-finite coefficient at step {j}")
        w = w - alpha * Q[:, j]
        if j > 0:
            w -= betas[-1] * Q[:, j - 1]
        alphas.append(alpha)
        max_alpha = max(max_alpha, abs(alpha))

        if j == steps - 1:
            break

        basis = Q[:, :j + 1]
        for _ in range(2):
            w_norm = np.linalg.norm(w)
            if w_norm == 0:
                break
            overlaps = basis.T @ w
            if np.max(np.abs(overlaps)) <= reorth_threshold * w_norm:
                break
            w -= basis @ overlaps
            reorthogonalizations += 1

        beta = np.linalg.norm(w)
        max_beta = max(max_beta, beta)
        if beta < breakdown_tol * (max_alpha + 2.0 * max_beta):
            logger.info(f"Lanczos breakdown after {j + 1} of {steps} steps: Krylov space is invariant")
            break
        betas.append(beta)
        Q[:, j + 1] = w / beta

    k_effective = len(alphas)
    logger.debug(f"Lanczos finished {k_effective} steps with {reorthogonalizations} reorthogonalization passes")
    return LanczosFactors(
        Q=Q[:, :k_effective].copy(),
        T=TriDiag(np.array(alphas), np.array(betas[:k_effective - 1])),
        k_requested=int(k),
        reorthogonalizations=reorthogonalizations,
    )


def lanczos_solve_probe(f: LanczosFactors, b_norm: float) -> np.ndarray:
    """``||b|| Q T^{-1} e_1``, the Lanczos approximation of ``A^{-1} b`` for the probe ``b``"""
    e1 = np.zeros(f.k_effective)
    e1[0] = 1.0
    return b_norm * (f.Q @ tridiag_cholesky(f.T).solve(e1))


def lanczos_solve_other(f: LanczosFactors, B: np.ndarray, A: Optional[MvmOperator] = None) -> KrylovSolve:
    """
    ``Q T^{-1} Q^T B`` for right-hand sides other than the probe

    When the operator ``A`` is supplied the relative residual
    ``||b' - A x||/||b'||`` of every column is reported; columns (nearly)
    orthogonal to the probe's Krylov space show up as large residuals.
    """
    B = np.asarray(B, dtype=np.float64)
    if B.shape[0] != f.Q.shape[0]:
        raise DimensionMismatchError(f"factors have {f.Q.shape[0]} rows, right-hand side has shape {B.shape}")
    X = f.Q @ tridiag_cholesky(f.T).solve(f.Q.T @ B)

    residuals = None
    if A is not None:
        op = as_operator(A)
        B2 = B.reshape(B.shape[0], -1)
        AX = op.matmat(X.reshape(B2.shape))
        norms = np.linalg.norm(B2, axis=0)
        norms[norms == 0] = 1.0
        residuals = np.linalg.norm(B2 - AX, axis=0) / norms
        worst = float(residuals.max()) if residuals.size else 0.0
        if worst > 1e-3:
            logger.warning(f"Lanczos solve residual {worst:.3e}: right-hand side poorly captured by the Krylov space")
    return KrylovSolve(X, residuals)
