"""Logit and probit by repeated streaming passes.

Each pass folds every block into a score vector, an information matrix
(the negated Hessian) and the log-likelihood at the current coefficients;
the step ``b_new = b + H^-1 s`` is then taken between passes.

``algorithm="newton-ml"`` uses the observed information. ``algorithm="irls"``
uses the IRLS weights: ``p(1-p)`` for logit (identical to Newton) and the
Fisher weights ``phi^2 / (Phi (1 - Phi))`` for probit.

The normal cdf and pdf come from ``scipy.special.ndtr`` / ``log_ndtr``
(Cephes, erf-based, double precision).
"""

from __future__ import annotations

import itertools
from collections.abc import Iterable
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .errors import InsufficientObservations, NonBinaryOutcome, NotConverged, UsageError
from .ingest import Source
from .linalg import spd_inverse, spd_solve
from .results import FitResult

LOG_SQRT_2PI = 0.5 * np.log(2 * np.pi)


@dataclass(frozen=True)
class GlmConfig:
    link: str = "logit"
    algorithm: str = "newton-ml"
    max_iterations: int = 100
    tolerance: float = 1e-8
    probability_clip: float = 1e-10
    max_halvings: int = 20

    def __post_init__(self):
        if self.link not in ("logit", "probit"):
            raise UsageError(f"unknown link {self.link!r}")
        if self.algorithm not in ("irls", "newton-ml"):
            raise UsageError(f"unknown algorithm {self.algorithm!r}")
        if not 0 < self.probability_clip < 0.5:
            raise UsageError("probability_clip must lie in (0, 0.5)")


@dataclass
class GlmState:
    beta: np.ndarray
    hessian: np.ndarray
    score: np.ndarray
    loglik: float = 0.0
    iteration: int = 0
    n: int = 0
    pinned: int = 0

    @classmethod
    def start(cls, beta) -> GlmState:
        beta = np.asarray(beta, dtype=float)
        k = beta.shape[0]
        return cls(beta=beta.copy(), hessian=np.zeros((k, k)), score=np.zeros(k))


def row_terms(eta: np.ndarray, y: np.ndarray, config: GlmConfig):
    """Per-row log-likelihood, score multiplier and information weight.

    The score contribution of row i is ``score_mult[i] * x_i`` and its
    information contribution ``info_w[i] * x_i x_i'``. ``pinned`` flags rows
    whose fitted probability hit the clip.
    """
    clip = config.probability_clip
    if config.link == "logit":
        p = special.expit(eta)
        pinned = (p < clip) | (p > 1 - clip)
        pc = np.clip(p, clip, 1 - clip)
        loglik = y * eta - np.logaddexp(0.0, eta)
        score_mult = y - p
        info_w = pc * (1 - pc)
        return loglik, score_mult, info_w, pinned
    log_cdf = special.log_ndtr(eta)
    log_sf = special.log_ndtr(-eta)
    log_pdf = -0.5 * eta**2 - LOG_SQRT_2PI
    cdf = special.ndtr(eta)
    pinned = (cdf < clip) | (cdf > 1 - clip)
    loglik = y * log_cdf + (1 - y) * log_sf
    # phi/Phi and phi/(1 - Phi) through logs stay finite far in the tails
    lam1 = np.exp(log_pdf - log_cdf)
    lam0 = np.exp(log_pdf - log_sf)
    score_mult = y * lam1 - (1 - y) * lam0
    if config.algorithm == "newton-ml":
        info_w = y * lam1 * (lam1 + eta) + (1 - y) * lam0 * (lam0 - eta)
    else:
        pc = np.clip(cdf, clip, 1 - clip)
        info_w = np.exp(2 * log_pdf) / (pc * (1 - pc))
    return loglik, score_mult, info_w, pinned


def glm_accumulate_pass(state: GlmState, source: Source, config: GlmConfig) -> GlmState:
    """One full pass over ``source`` at ``state.beta``; returns a fresh state."""
    return _accumulate(state, source(), config)


def _accumulate(state: GlmState, blocks: Iterable, config: GlmConfig) -> GlmState:
    beta = state.beta
    k = beta.shape[0]
    out = GlmState(beta=beta.copy(), hessian=np.zeros((k, k)), score=np.zeros(k), iteration=state.iteration)
    for block in blocks:
        X, y, w = block.X, block.y, block.w
        if X.shape[1] != k:
            raise UsageError(f"block has {X.shape[1]} covariates, coefficients have {k}")
        if np.any((y != 0) & (y != 1)):
            raise NonBinaryOutcome(f"outcome outside {{0, 1}} in block at row offset {block.row_offset}")
        eta = X @ beta
        ll, smult, infow, pinned = row_terms(eta, y, config)
        if w is not None:
            ll, smult, infow = ll * w, smult * w, infow * w
        out.loglik += float(ll.sum())
        out.score += X.T @ smult
        H = (X * infow[:, None]).T @ X
        out.hessian += np.triu(H) + np.triu(H, 1).T
        out.n += y.shape[0]
        out.pinned += int(pinned.sum())
    return out


@dataclass
class GlmTrace:
    logliks: list[float] = field(default_factory=list)
    halvings: int = 0
    passes: int = 0


def glm_fit(source: Source, config: GlmConfig, names=None, start=None, k: int | None = None) -> FitResult:
    """Iterate Newton/IRLS steps, one data pass per evaluation, until the step is below tolerance.

    Starts from zero coefficients. A step that lowers the log-likelihood is
    halved (up to ``max_halvings`` times), each retry costing one more pass.
    A non-converged fit is returned with ``meta["converged"] = False``.
    """
    blocks = iter(source())
    if start is None:
        if k is None:
            # the first block fixes the dimension; it still belongs to the first pass
            first = next(blocks, None)
            if first is None:
                raise UsageError("source produced no rows")
            k = first.X.shape[1]
            blocks = itertools.chain([first], blocks)
        start = np.zeros(k)
    trace = GlmTrace()
    state = _accumulate(GlmState.start(start), blocks, config)
    trace.passes += 1
    trace.logliks.append(state.loglik)
    if state.n <= state.beta.shape[0]:
        raise InsufficientObservations(f"{state.n} observations for {state.beta.shape[0]} coefficients")
    converged = False
    iterations = 0
    while iterations < config.max_iterations:
        iterations += 1
        step = spd_solve(state.hessian, state.score).solution
        scale = 1.0
        for _ in range(config.max_halvings + 1):
            cand = glm_accumulate_pass(GlmState.start(state.beta + scale * step), source, config)
            trace.passes += 1
            if cand.loglik >= state.loglik - 1e-12 * (1 + abs(state.loglik)):
                break
            scale *= 0.5
            trace.halvings += 1
        cand.iteration = iterations
        applied = np.max(np.abs(scale * step))
        state = cand
        trace.logliks.append(state.loglik)
        if applied < config.tolerance:
            converged = True
            break
    k = state.beta.shape[0]
    vcv = spd_inverse(state.hessian)
    result = FitResult(
        coefficients=state.beta,
        vcv=vcv,
        sigma2=1.0,
        r2=float("nan"),
        adj_r2=float("nan"),
        f_stat=None,
        dof_resid=state.n - k,
        n=state.n,
        k=k,
        method=config.link,
        vcv_kind="iid",
        names=names,
        passes=trace.passes,
        meta={
            "algorithm": config.algorithm,
            "iterations": iterations,
            "converged": converged,
            "loglik": state.loglik,
            "step_halvings": trace.halvings,
            "separation_suspected": state.pinned > 0,
            "pinned_rows": state.pinned,
            "logliks": trace.logliks,
        },
    )
    return result


def require_converged(result: FitResult) -> FitResult:
    if not result.meta.get("converged", True):
        raise NotConverged(f"{result.method} did not converge in {result.meta.get('iterations')} iterations")
    return result
