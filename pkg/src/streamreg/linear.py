"""Closed-form estimators computed from accumulated cross products."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .accumulate import CrossProducts
from .errors import ArityMismatch, InsufficientObservations, NegativeLambda, UnderIdentified
from .linalg import solve, spd_inverse, spd_solve, symmetrize
from .results import FitResult, fit_statistics


def _require_dof(n: int, k: int) -> int:
    if n <= k:
        raise InsufficientObservations(f"{n} observations for {k} coefficients")
    return n - k


def residual_ss(cp: CrossProducts, beta: np.ndarray) -> float:
    """Sum of squared residuals of an arbitrary ``beta``: psi - 2 b'X'y + b'X'X b."""
    return float(cp.psi - 2.0 * beta @ cp.upsilon + beta @ cp.sigma @ beta)


def _result(cp, beta, vcv, rss_raw, method, vcv_kind="iid", **meta) -> FitResult:
    dof = cp.n - cp.k
    st = fit_statistics(cp, rss_raw, cp.k, dof)
    if vcv is not None:
        vcv = symmetrize(st["sigma2"] * vcv)
    return FitResult(
        coefficients=beta,
        vcv=vcv,
        dof_resid=dof,
        n=cp.n,
        k=cp.k,
        method=method,
        vcv_kind=vcv_kind,
        names=cp.names,
        meta=meta,
        **st,
    )


def ols_fit(cp: CrossProducts) -> FitResult:
    """Least squares (weighted when the statistics were accumulated with weights)."""
    _require_dof(cp.n, cp.k)
    report = spd_solve(cp.sigma, cp.upsilon)
    beta = report.solution
    # psi - upsilon' beta is the residual identity y'y - y'X (X'X)^-1 X'y
    rss_raw = float(cp.psi - cp.upsilon @ beta)
    method = "wls" if cp.weighted else "ols"
    return _result(cp, beta, spd_inverse(cp.sigma), rss_raw, method, solver=report.method, rcond=report.rcond)


def iv_fit(cp: CrossProducts) -> FitResult:
    """Just-identified instrumental variables: solves (Z'X) b = Z'y."""
    if cp.l != cp.k:
        raise ArityMismatch(f"IV needs as many instruments as covariates ({cp.l} vs {cp.k})")
    _require_dof(cp.n, cp.k)
    zx = cp.xz.T
    report = solve(zx, cp.zy)
    beta = report.solution
    a_inv = solve(zx, np.eye(cp.k)).solution
    bread = a_inv @ cp.zz @ a_inv.T
    return _result(cp, beta, bread, residual_ss(cp, beta), "iv", solver=report.method, rcond=report.rcond)


def tsls_fit(cp: CrossProducts) -> FitResult:
    """Two-stage least squares assembled from X'Z, Z'Z and Z'y."""
    if cp.l < cp.k:
        raise UnderIdentified(f"{cp.l} instruments for {cp.k} covariates")
    _require_dof(cp.n, cp.k)
    proj = spd_solve(cp.zz, cp.xz.T).solution  # (Z'Z)^-1 Z'X
    a = symmetrize(cp.xz @ proj)
    c = proj.T @ cp.zy
    report = spd_solve(a, c)
    beta = report.solution
    return _result(cp, beta, spd_inverse(a), residual_ss(cp, beta), "2sls", solver=report.method, rcond=report.rcond)


def ridge_penalty(cp: CrossProducts, penalize_intercept: bool = False) -> np.ndarray:
    """Diagonal of the penalty matrix: ones, except an unpenalized intercept."""
    d = np.ones(cp.k)
    if cp.intercept and not penalize_intercept:
        d[0] = 0.0
    return d


def ridge_fit(cp: CrossProducts, lam: float, penalize_intercept: bool = False) -> FitResult:
    if lam < 0:
        raise NegativeLambda(f"lambda must be nonnegative, got {lam}")
    _require_dof(cp.n, cp.k)
    A = cp.sigma + np.diag(lam * ridge_penalty(cp, penalize_intercept))
    report = spd_solve(A, cp.upsilon)
    beta = report.solution
    return _result(cp, beta, None, residual_ss(cp, beta), "ridge", vcv_kind="none", **{"lambda": lam})


@dataclass
class UpdateStep:
    beta: np.ndarray
    sigma: np.ndarray
    solves: int


def woodbury_update_fit(beta_prev, sigma_prev, cp_next: CrossProducts) -> UpdateStep:
    """Update a least-squares estimate with one more block via the inverse-of-sum lemma.

    With ``A = sigma_prev^-1 sigma_next`` the updated estimate is
    ``(I - A (I + A)^-1) (beta_prev + sigma_prev^-1 upsilon_next)``.
    Returns the new estimate, the summed cross-product matrix for chaining and
    the number of K x K factorizations performed (always 2).
    """
    sigma_prev = np.asarray(sigma_prev, dtype=float)
    k = sigma_prev.shape[0]
    rhs = np.column_stack([cp_next.sigma, cp_next.upsilon])
    sol = spd_solve(sigma_prev, rhs).solution
    A, v = sol[:, :k], sol[:, k]
    eye = np.eye(k)
    # A (I + A)^-1 = ((I + A)^-T A^T)^T
    a_term = solve((eye + A).T, A.T).solution.T
    omega = eye - a_term
    beta = omega @ (np.asarray(beta_prev, dtype=float) + v)
    return UpdateStep(beta=beta, sigma=sigma_prev + cp_next.sigma, solves=2)


def woodbury_chain(parts: list[CrossProducts]) -> UpdateStep:
    """Run the updating estimator across a sequence of per-block statistics."""
    first = parts[0]
    beta = spd_solve(first.sigma, first.upsilon).solution
    step = UpdateStep(beta=beta, sigma=first.sigma.copy(), solves=1)
    for cp in parts[1:]:
        nxt = woodbury_update_fit(step.beta, step.sigma, cp)
        step = UpdateStep(nxt.beta, nxt.sigma, step.solves + nxt.solves)
    return step
