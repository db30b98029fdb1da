"""Lasso and elastic net by cyclic coordinate descent on X'X and X'y.

The minimized objective is

    (1/2) ||y - X b||^2 + lambda1 * sum_j |b_j| + (lambda2 / 2) * sum_j b_j^2

with both penalties skipping the intercept unless ``penalize_intercept``.
The squared-error term equals ``(psi - 2 b'upsilon + b'sigma b) / 2``, so the
solver never touches row-level data. Coordinate ``j`` is updated to

    b_j = S(upsilon_j - sum_{m != j} sigma_jm b_m, lambda1) / (sigma_jj + lambda2)

where ``S(z, t) = sign(z) max(|z| - t, 0)`` is the soft threshold.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass, field, replace

import numpy as np

from .accumulate import CrossProducts, GroupedAccumulator
from .errors import NegativeLambda, TooFewFolds, UsageError
from .linear import residual_ss, ridge_fit, ridge_penalty, _result


@dataclass(frozen=True)
class CoordinateDescentConfig:
    lambda1: float = 0.0
    lambda2: float = 0.0
    max_iterations: int = 10_000
    tolerance: float = 1e-8
    penalize_intercept: bool = False

    def __post_init__(self):
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise NegativeLambda("penalty strengths must be nonnegative")
        if self.tolerance <= 0 or self.max_iterations < 1:
            raise UsageError("tolerance must be positive and max_iterations >= 1")


@dataclass
class CdTrace:
    iterations_used: int
    converged: bool
    final_max_delta: float
    objective: list[float] = field(default_factory=list)


def soft_threshold(z: float, t: float) -> float:
    if z > t:
        return z - t
    if z < -t:
        return z + t
    return 0.0


def penalized_objective(cp: CrossProducts, beta: np.ndarray, config: CoordinateDescentConfig) -> float:
    d = ridge_penalty(cp, config.penalize_intercept)
    return 0.5 * residual_ss(cp, beta) + config.lambda1 * float(d @ np.abs(beta)) + 0.5 * config.lambda2 * float(d @ beta**2)


def coordinate_descent(
    cp: CrossProducts, config: CoordinateDescentConfig, start: np.ndarray | None = None, track_objective: bool = False
) -> tuple[np.ndarray, CdTrace]:
    sigma, ups = cp.sigma, cp.upsilon
    d = ridge_penalty(cp, config.penalize_intercept)
    l1 = config.lambda1 * d
    curv = np.diag(sigma) + config.lambda2 * d
    beta = np.zeros(cp.k) if start is None else np.array(start, dtype=float)
    grad = ups - sigma @ beta  # X'(y - X b), kept current after every coordinate move
    trace = CdTrace(0, False, np.inf)
    if track_objective:
        trace.objective.append(penalized_objective(cp, beta, config))
    for it in range(1, config.max_iterations + 1):
        max_delta = 0.0
        for j in range(cp.k):
            if curv[j] <= 0.0:
                continue
            partial = grad[j] + sigma[j, j] * beta[j]
            new = soft_threshold(partial, l1[j]) / curv[j]
            delta = new - beta[j]
            if delta != 0.0:
                beta[j] = new
                grad -= sigma[:, j] * delta
                max_delta = max(max_delta, abs(delta))
        trace.iterations_used = it
        trace.final_max_delta = max_delta
        if track_objective:
            trace.objective.append(penalized_objective(cp, beta, config))
        if max_delta < config.tolerance:
            trace.converged = True
            break
    return beta, trace


def _penalized_result(cp: CrossProducts, beta: np.ndarray, trace: CdTrace, method: str, config) -> object:
    return _result(
        cp,
        beta,
        None,
        residual_ss(cp, beta),
        method,
        vcv_kind="none",
        lambda1=config.lambda1,
        lambda2=config.lambda2,
        iterations=trace.iterations_used,
        converged=trace.converged,
    )


def lasso_fit(cp: CrossProducts, config: CoordinateDescentConfig):
    """Returns ``(FitResult, CdTrace)``; a non-converged fit is still returned, flagged in the trace."""
    if config.lambda2 != 0:
        raise UsageError("lasso_fit requires lambda2 == 0; use elastic_net_fit")
    if cp.n == 0:
        raise UsageError("no observations")
    beta, trace = coordinate_descent(cp, config)
    return _penalized_result(cp, beta, trace, "lasso", config), trace


def elastic_net_fit(cp: CrossProducts, config: CoordinateDescentConfig):
    if cp.n == 0:
        raise UsageError("no observations")
    beta, trace = coordinate_descent(cp, config)
    return _penalized_result(cp, beta, trace, "elastic-net", config), trace


def holdout_mse(cp: CrossProducts, beta: np.ndarray) -> float:
    """Mean squared prediction error of ``beta`` on the rows summarized by ``cp``."""
    return residual_ss(cp, beta) / cp.sum_w


def _fit_coefficients(cp: CrossProducts, point, model: str, base: CoordinateDescentConfig) -> np.ndarray:
    if model == "ridge":
        return ridge_fit(cp, float(point), base.penalize_intercept).coefficients
    if model == "lasso":
        return coordinate_descent(cp, replace(base, lambda1=float(point), lambda2=0.0))[0]
    if model == "elastic-net":
        l1, l2 = point
        return coordinate_descent(cp, replace(base, lambda1=float(l1), lambda2=float(l2)))[0]
    raise UsageError(f"unknown model {model!r}")


@dataclass
class CvResult:
    best: object
    grid: list
    mse: np.ndarray  # total held-out MSE per grid point
    fold_mse: np.ndarray  # grid point x fold


def cv_select_lambda(
    ga: GroupedAccumulator,
    grid: Sequence,
    model: str = "ridge",
    config: CoordinateDescentConfig | None = None,
) -> CvResult:
    """k-fold cross-validation where each group of ``ga`` is one fold.

    Fold ``g`` is scored as ``(psi_g - 2 b'upsilon_g + b'sigma_g b) / N_g`` with
    ``b`` fit on the other folds; a grid point's score is the sum over folds.
    Ties go to the larger penalty.
    """
    if ga.n_groups < 2:
        raise TooFewFolds(f"cross-validation needs at least 2 folds, got {ga.n_groups}")
    grid = list(grid)
    if not grid:
        raise UsageError("empty lambda grid")
    base = config or CoordinateDescentConfig()
    labels = ga.labels
    train = {}
    for g in labels:
        rest = [h for h in labels if h != g]
        train[g] = ga.merged(rest)
    fold_mse = np.empty((len(grid), len(labels)))
    for i, point in enumerate(grid):
        for j, g in enumerate(labels):
            beta = _fit_coefficients(train[g], point, model, base)
            fold_mse[i, j] = holdout_mse(ga.groups[g], beta)
    total = fold_mse.sum(axis=1)
    best_i = min(range(len(grid)), key=lambda i: (total[i], _neg_strength(grid[i])))
    return CvResult(best=grid[best_i], grid=grid, mse=total, fold_mse=fold_mse)


def _neg_strength(point) -> tuple:
    if isinstance(point, (tuple, list)):
        return tuple(-float(p) for p in point)
    return (-float(point),)
