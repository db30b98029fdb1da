"""Fixed-effects estimators built only from per-group cross products.

Demeaning is never applied to rows. For a group with weight total ``n_g`` and
covariate sums ``s_g`` the within cross products are

    X_g'X_g - s_g s_g' / n_g        and        X_g'y_g - s_g (sum y)_g / n_g

and the two-way version subtracts the time-period terms as well and adds
back the grand-total term (valid for balanced panels).
"""

from __future__ import annotations

import math
from collections.abc import Callable, Iterable
from dataclasses import dataclass

import numpy as np

from .accumulate import CrossProducts, GroupedAccumulator
from .errors import InsufficientObservations, TooManyGroups, UnbalancedPanel, UsageError
from .linalg import spd_inverse, spd_solve, symmetrize
from .linear import ols_fit
from .results import FitResult

DEFAULT_MAX_RECOVER_GROUPS = 5000


@dataclass
class GroupSummary:
    group: object
    n: int
    xbar: np.ndarray
    ybar: float


@dataclass
class FeResult:
    fit: FitResult
    absorbed_groups: int
    recovered_effects: dict | None = None
    coefficients: np.ndarray | None = None
    vcv: np.ndarray | None = None
    names: list | None = None


def group_summaries(ga: GroupedAccumulator) -> list[GroupSummary]:
    return [
        GroupSummary(g, cp.n, cp.sum_x / cp.sum_w, cp.sum_y / cp.sum_w) for g, cp in ga.groups.items() if cp.sum_w > 0
    ]


def _slope_columns(cp: CrossProducts) -> np.ndarray:
    # a constant column is absorbed by the group effects
    return np.arange(1, cp.k) if cp.intercept else np.arange(cp.k)


def _demeaned_terms(cp: CrossProducts, cols: np.ndarray):
    """Mean-removal terms s s'/n, s sy/n and sy^2/n for one group."""
    if cp.sum_w <= 0:
        k = len(cols)
        return np.zeros((k, k)), np.zeros(k), 0.0
    s = cp.sum_x[cols]
    return np.outer(s, s) / cp.sum_w, s * cp.sum_y / cp.sum_w, cp.sum_y**2 / cp.sum_w


def _within_fit(sxx, sxy, syy, n, dof, names, method, absorbed) -> FeResult:
    k = sxx.shape[0]
    if dof <= 0:
        raise InsufficientObservations(f"{n} observations leave {dof} residual degrees of freedom")
    beta = spd_solve(sxx, sxy).solution
    rss_raw = float(syy - sxy @ beta)
    rss = max(rss_raw, 0.0)
    sigma2 = rss / dof
    degenerate = syy <= 1e-12 * n
    r2 = 0.0 if degenerate else 1.0 - rss / syy
    adj = 0.0 if degenerate else 1.0 - (1.0 - r2) * (n - 1) / dof
    f_stat = None
    if not degenerate and k > 0:
        f_stat = math.inf if rss == 0 else ((syy - rss) / k) / (rss / dof)
    fit = FitResult(
        coefficients=beta,
        vcv=symmetrize(sigma2 * spd_inverse(sxx)),
        sigma2=sigma2,
        sigma2_raw=rss_raw / dof,
        rss=rss,
        tss=syy,
        r2=r2,
        adj_r2=adj,
        f_stat=f_stat,
        dof_resid=dof,
        n=n,
        k=k,
        method=method,
        names=names,
        degenerate_variance=degenerate,
        meta={"absorbed": absorbed, "r2_kind": "within"},
    )
    return fit


def fe_within_fit(ga: GroupedAccumulator) -> FeResult:
    """One-way fixed effects (within estimator); residual dof is n - K - N_G."""
    total = ga.total
    cols = _slope_columns(total)
    if len(cols) == 0:
        raise UsageError("no time-varying covariates")
    sxx = total.sigma[np.ix_(cols, cols)].copy()
    sxy = total.upsilon[cols].copy()
    syy = total.psi
    for cp in ga.groups.values():
        a, b, c = _demeaned_terms(cp, cols)
        sxx -= a
        sxy -= b
        syy -= c
    names = None if total.names is None else [total.names[i] for i in cols]
    dof = total.n - len(cols) - ga.n_groups
    fit = _within_fit(symmetrize(sxx), sxy, syy, total.n, dof, names, "fe", ga.n_groups)
    return FeResult(fit=fit, absorbed_groups=ga.n_groups)


def check_balanced(ga: GroupedAccumulator) -> int:
    """Common (g, t) cell count; raises :class:`UnbalancedPanel` otherwise."""
    if ga.second_by is None:
        raise UsageError("two-way fixed effects need a second grouping dimension")
    expected = ga.n_groups * len(ga.second_groups)
    counts = set(ga.cells.values())
    if len(ga.cells) != expected or len(counts) != 1:
        raise UnbalancedPanel(
            f"{len(ga.cells)} of {expected} group-period cells observed with counts {sorted(counts)[:5]}"
        )
    return counts.pop()


def fe_twoway_fit(ga: GroupedAccumulator, balanced: bool = True) -> FeResult:
    """Two-way fixed effects by double demeaning; balanced panels only.

    Residual dof is n - K - N_G - N_T + 1.
    """
    if not balanced:
        raise UnbalancedPanel("unbalanced two-way fixed effects are not supported")
    check_balanced(ga)
    total = ga.total
    if total.weighted:
        raise UsageError("two-way fixed effects do not support weights")
    cols = _slope_columns(total)
    if len(cols) == 0:
        raise UsageError("no time-varying covariates")
    sxx = total.sigma[np.ix_(cols, cols)].copy()
    sxy = total.upsilon[cols].copy()
    syy = total.psi
    for table in (ga.groups, ga.second_groups):
        for cp in table.values():
            a, b, c = _demeaned_terms(cp, cols)
            sxx -= a
            sxy -= b
            syy -= c
    a, b, c = _demeaned_terms(total, cols)
    sxx += a
    sxy += b
    syy += c
    n_t = len(ga.second_groups)
    names = None if total.names is None else [total.names[i] for i in cols]
    dof = total.n - len(cols) - ga.n_groups - n_t + 1
    fit = _within_fit(symmetrize(sxx), sxy, syy, total.n, dof, names, "fe2", ga.n_groups + n_t - 1)
    return FeResult(fit=fit, absorbed_groups=ga.n_groups + n_t - 1)


def fe_recover_effects(ga: GroupedAccumulator, max_groups: int = DEFAULT_MAX_RECOVER_GROUPS) -> FeResult:
    """Slopes and every group effect from the bordered normal equations.

    The system is ``[[X'X, S'], [S, diag(n_g)]] [b; mu] = [X'y; sy]`` where
    row ``g`` of ``S`` holds the covariate sums of group ``g`` and ``sy`` the
    per-group outcome sums. No global intercept is estimated.
    """
    if ga.n_groups > max_groups:
        raise TooManyGroups(f"{ga.n_groups} groups exceed the recovery cap of {max_groups}")
    total = ga.total
    cols = _slope_columns(total)
    k, G = len(cols), ga.n_groups
    dof = total.n - k - G
    if dof <= 0:
        raise InsufficientObservations(f"{total.n} observations leave {dof} residual degrees of freedom")
    labels = ga.labels
    S = np.array([ga.groups[g].sum_x[cols] for g in labels]).reshape(G, k)
    counts = np.array([ga.groups[g].sum_w for g in labels])
    sy = np.array([ga.groups[g].sum_y for g in labels])
    M = np.zeros((k + G, k + G))
    M[:k, :k] = total.sigma[np.ix_(cols, cols)]
    M[k:, :k] = S
    M[:k, k:] = S.T
    M[k:, k:] = np.diag(counts)
    rhs = np.concatenate([total.upsilon[cols], sy])
    coef = spd_solve(M, rhs).solution
    rss_raw = float(total.psi - coef @ rhs)
    rss = max(rss_raw, 0.0)
    sigma2 = rss / dof
    vcv = symmetrize(sigma2 * spd_inverse(M))
    names = None if total.names is None else [total.names[i] for i in cols]
    within = fe_within_fit(ga).fit
    fit = FitResult(
        coefficients=coef[:k],
        vcv=vcv[:k, :k],
        sigma2=sigma2,
        sigma2_raw=rss_raw / dof,
        rss=rss,
        tss=within.tss,
        r2=within.r2,
        adj_r2=within.adj_r2,
        f_stat=within.f_stat,
        dof_resid=dof,
        n=total.n,
        k=k,
        method="fe",
        names=names,
        meta={"absorbed": G, "r2_kind": "within"},
    )
    se = np.sqrt(np.clip(np.diag(vcv), 0.0, None))
    effects = {g: (float(coef[k + i]), float(se[k + i])) for i, g in enumerate(labels)}
    full_names = (names or [f"x{i}" for i in range(k)]) + [f"fe[{g}]" for g in labels]
    return FeResult(
        fit=fit, absorbed_groups=G, recovered_effects=effects, coefficients=coef, vcv=vcv, names=full_names
    )


def subsample_fit(
    ga: GroupedAccumulator,
    keep: Iterable,
    estimator: Callable[[CrossProducts], FitResult] = ols_fit,
) -> FitResult:
    """Fit ``estimator`` on the union of the selected groups' statistics."""
    return estimator(ga.merged(list(keep)))
