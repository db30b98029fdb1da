"""Small dense linear algebra used by every estimator.

Matrices here are K x K with K small (the number of covariates), so all
routines are dense. Symmetric matrices are plain ``ndarray`` values that are
kept symmetric by construction.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np
import scipy.linalg as sla

from .errors import DimensionMismatch, RankDeficient

# relative pivot threshold, scaled by the largest diagonal entry
SINGULAR_TOL = 1e-12


@dataclass(frozen=True)
class SolveReport:
    solution: np.ndarray
    method: Literal["cholesky", "pivoted-fallback", "lu"]
    rcond: float


def _check_system(A: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {A.shape}")
    if b.shape[0] != A.shape[0]:
        raise DimensionMismatch(f"system of size {A.shape[0]} with right-hand side {b.shape}")
    return A, b


def gauss_jordan_solve(A, b, tol: float = SINGULAR_TOL) -> SolveReport:
    """Solve ``A x = b`` by Gauss-Jordan elimination with full pivoting.

    Works for any square ``A``; raises :class:`RankDeficient` when the best
    remaining pivot falls below ``tol * max|diag(A)|``.
    """
    A, b = _check_system(A, b)
    n = A.shape[0]
    vector = b.ndim == 1
    rhs = b.reshape(n, -1).copy()
    M = A.copy()
    scale = np.max(np.abs(np.diag(M))) if n else 0.0
    if scale == 0.0:
        scale = np.max(np.abs(M)) if M.size else 0.0
    threshold = tol * scale
    col_perm = np.arange(n)
    pivots = np.empty(n)
    for step in range(n):
        sub = np.abs(M[step:, step:])
        r, c = np.unravel_index(np.argmax(sub), sub.shape)
        r += step
        c += step
        pivot = M[r, c]
        if not abs(pivot) > threshold:
            raise RankDeficient(
                f"matrix is numerically singular (pivot {abs(pivot):.3e} at step {step})"
            )
        if r != step:
            M[[step, r]] = M[[r, step]]
            rhs[[step, r]] = rhs[[r, step]]
        if c != step:
            M[:, [step, c]] = M[:, [c, step]]
            col_perm[[step, c]] = col_perm[[c, step]]
        pivots[step] = abs(pivot)
        M[step] /= pivot
        rhs[step] /= pivot
        for i in range(n):
            if i != step and M[i, step] != 0.0:
                f = M[i, step]
                M[i] -= f * M[step]
                rhs[i] -= f * rhs[step]
    x = np.empty_like(rhs)
    x[col_perm] = rhs
    rcond = float(pivots.min() / pivots.max()) if n else 1.0
    return SolveReport(x[:, 0] if vector else x, "pivoted-fallback", rcond)


def spd_solve(A, b) -> SolveReport:
    """Solve a symmetric positive (semi)definite system.

    Cholesky is the fast path. A failed factorization, or one whose smallest
    pivot is negligible next to the largest diagonal entry, falls back to
    :func:`gauss_jordan_solve`, which either solves the system or raises
    :class:`RankDeficient`.

    ``rcond`` is the cheap estimate ``(min L_jj / max L_jj)**2`` on the
    Cholesky path and the pivot ratio on the fallback path.
    """
    A, b = _check_system(A, b)
    if A.shape[0] == 0:
        return SolveReport(b.copy(), "cholesky", 1.0)
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
        raise RankDeficient("non-finite entries in linear system")
    try:
        L, lower = sla.cho_factor(A, lower=True, check_finite=False)
        d = np.diag(L)
        maxdiag = np.max(np.diag(A))
        if np.min(d) ** 2 > SINGULAR_TOL * maxdiag:
            x = sla.cho_solve((L, lower), b, check_finite=False)
            return SolveReport(x, "cholesky", float((d.min() / d.max()) ** 2))
    except np.linalg.LinAlgError:
        pass
    return gauss_jordan_solve(A, b)


def solve(A, b) -> SolveReport:
    """Solve a general square system (LU with partial pivoting)."""
    A, b = _check_system(A, b)
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
        raise RankDeficient("non-finite entries in linear system")
    lu, piv = sla.lu_factor(A, check_finite=False)
    u = np.abs(np.diag(lu))
    if u.min() <= SINGULAR_TOL * np.max(np.abs(A)):
        return gauss_jordan_solve(A, b)
    return SolveReport(sla.lu_solve((lu, piv), b, check_finite=False), "lu", float(u.min() / u.max()))


def spd_inverse(A) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    inv = spd_solve(A, np.eye(A.shape[0])).solution
    return symmetrize(inv)


def symmetrize(A: np.ndarray) -> np.ndarray:
    return 0.5 * (A + A.T)


def sym_accumulate_outer(A, x, scale: float = 1.0) -> np.ndarray:
    """Return ``A + scale * x x'``."""
    A = np.asarray(A, dtype=float)
    x = np.asarray(x, dtype=float)
    if A.shape != (x.shape[0], x.shape[0]):
        raise DimensionMismatch(f"matrix {A.shape} vs vector of length {x.shape[0]}")
    if not np.isfinite(scale):
        raise ValueError("scale must be finite")
    # the outer product is exactly symmetric elementwise, so the sum is too
    return A + scale * np.outer(x, x)


def quad_form(A: np.ndarray, v: np.ndarray) -> float:
    return float(v @ A @ v)
