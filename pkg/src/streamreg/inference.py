"""Robust and resampling variance estimators.

HC1 and the analytic cluster-robust estimator need residuals, so they make a
second pass over the data with the coefficients from the first. The cluster
bootstrap works on per-group statistics alone and never revisits rows.
"""

from __future__ import annotations

from collections.abc import Callable
from dataclasses import dataclass

import numpy as np
import pandas as pd

from . import rng
from .accumulate import GroupedAccumulator
from .errors import AllReplicatesSingular, RankDeficient, SingletonCluster, StreamChanged, TooFewGroups, UsageError
from .ingest import Source
from .linalg import spd_inverse, spd_solve, symmetrize

BOOTSTRAP_STREAM = 0xB007


@dataclass
class RobustMeat:
    omega: np.ndarray | None = None
    scores: dict | None = None
    n: int = 0


def _sandwich(sigma: np.ndarray, meat: np.ndarray, factor: float) -> np.ndarray:
    bread = spd_inverse(sigma)
    return symmetrize(factor * bread @ meat @ bread)


def _residuals(block, beta):
    u = block.y - block.X @ beta
    return u if block.w is None else u * block.w


def hc1_meat(source: Source, beta) -> RobustMeat:
    """Second pass: ``omega = sum_i (w_i u_i)^2 x_i x_i'``."""
    beta = np.asarray(beta, dtype=float)
    k = beta.shape[0]
    omega = np.zeros((k, k))
    n = 0
    for block in source():
        wu = _residuals(block, beta)
        Xu = block.X * wu[:, None]
        part = Xu.T @ Xu
        omega += np.triu(part) + np.triu(part, 1).T
        n += block.n
    return RobustMeat(omega=omega, n=n)


def hc1_vcv(source: Source, beta, sigma, n: int, k: int) -> np.ndarray:
    meat = hc1_meat(source, beta)
    if meat.n != n:
        raise StreamChanged(f"second pass saw {meat.n} rows, first pass saw {n}")
    return _sandwich(np.asarray(sigma), meat.omega, n / (n - k))


def cluster_scores(source: Source, beta, by: str = "g") -> RobustMeat:
    """Second pass: per-cluster score vectors ``X_g' u_g``, summed across blocks."""
    beta = np.asarray(beta, dtype=float)
    scores: dict = {}
    n = 0
    for block in source():
        wu = _residuals(block, beta)
        Xu = block.X * wu[:, None]
        codes, uniques = pd.factorize(np.asarray(block.keys(by)), sort=False)
        sums = np.zeros((len(uniques), Xu.shape[1]))
        np.add.at(sums, codes, Xu)
        for label, s in zip(uniques, sums):
            label = label.item() if isinstance(label, np.generic) else label
            prev = scores.get(label)
            scores[label] = s if prev is None else prev + s
        n += block.n
    return RobustMeat(scores=scores, n=n)


def crve_vcv(source: Source, beta, sigma, n: int, k: int, n_g: int | None = None, by: str = "g") -> np.ndarray:
    """Cluster-robust sandwich with the (N-1)/(N-K) * G/(G-1) small-sample factor."""
    meat = cluster_scores(source, beta, by)
    if meat.n != n:
        raise StreamChanged(f"second pass saw {meat.n} rows, first pass saw {n}")
    G = len(meat.scores)
    if n_g is not None and G != n_g:
        raise StreamChanged(f"second pass saw {G} clusters, expected {n_g}")
    if G < 2:
        raise SingletonCluster("cluster-robust variance needs at least two clusters")
    S = np.array(list(meat.scores.values()))
    omega = S.T @ S
    factor = (n - 1) / (n - k) * G / (G - 1)
    return _sandwich(np.asarray(sigma), np.triu(omega) + np.triu(omega, 1).T, factor)


@dataclass(frozen=True)
class BootstrapConfig:
    replications: int = 999
    seed: int = 0
    resample_unit: str = "group"
    max_failure_share: float = 0.10

    def __post_init__(self):
        if self.replications < 1:
            raise UsageError("replications must be >= 1")


@dataclass
class BootstrapResult:
    vcv: np.ndarray
    replicates: np.ndarray
    failures: int


def bootstrap_draws(seed: int, replicate: int, n_groups: int) -> np.ndarray:
    """Group indices for one replicate: ``floor(u * G)`` over first-appearance ids."""
    return rng.categories(seed, BOOTSTRAP_STREAM + replicate, np.arange(n_groups), n_groups)


def bootstrap_replicate(ga: GroupedAccumulator, draws: np.ndarray, stacked=None) -> np.ndarray:
    """Coefficients from the summed statistics of the drawn groups."""
    sig, ups = stacked if stacked is not None else _stack(ga)
    counts = np.bincount(np.asarray(draws), minlength=sig.shape[0]).astype(float)
    sigma = np.tensordot(counts, sig, axes=1)
    upsilon = counts @ ups
    return spd_solve(sigma, upsilon).solution


def _stack(ga: GroupedAccumulator):
    cps = list(ga.groups.values())
    return np.array([cp.sigma for cp in cps]), np.array([cp.upsilon for cp in cps])


def cluster_bootstrap_vcv(
    ga: GroupedAccumulator,
    config: BootstrapConfig,
    sampler: Callable[[int, int], np.ndarray] | None = None,
) -> BootstrapResult:
    """Pairs-cluster bootstrap over per-group ``(sigma_g, upsilon_g)``.

    Each replicate draws ``G`` groups with replacement and solves the summed
    normal equations. The variance is ``(1/B) sum_b (b* - mean)(b* - mean)'``.
    Singular replicates are dropped and counted; more than
    ``max_failure_share`` of them is an error. ``sampler(b, G)`` overrides
    the draws (used by tests to force particular resamples).
    """
    G = ga.n_groups
    if G < 2:
        raise TooFewGroups(f"bootstrap needs at least 2 groups, got {G}")
    stacked = _stack(ga)
    draw = sampler or (lambda b, g: bootstrap_draws(config.seed, b, g))
    reps = []
    failures = 0
    for b in range(config.replications):
        try:
            reps.append(bootstrap_replicate(ga, draw(b, G), stacked))
        except RankDeficient:
            failures += 1
    if not reps or failures > config.max_failure_share * config.replications:
        raise AllReplicatesSingular(f"{failures} of {config.replications} bootstrap replicates were singular")
    R = np.array(reps)
    dev = R - R.mean(axis=0)
    vcv = symmetrize(dev.T @ dev / R.shape[0])
    return BootstrapResult(vcv=vcv, replicates=R, failures=failures)
