"""Synthetic data in the benchmark design: a constant, K-1 uniform regressors, N(0, 3) noise."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .errors import IoError, UsageError

NOISE_VARIANCE = 3.0


@dataclass(frozen=True)
class SynthConfig:
    n: int
    k: int
    seed: int = 0
    chunk_rows: int = 100_000

    def __post_init__(self):
        if self.n < 1:
            raise UsageError("n must be >= 1")
        if self.k < 2:
            raise UsageError("k must be >= 2")


def synth_beta(k: int, seed: int) -> np.ndarray:
    """Coefficients for ``k`` columns (intercept first), fixed by the seed."""
    return np.round(np.random.default_rng([seed, 0]).uniform(-2.0, 2.0, size=k), 3)


def synth_arrays(n: int, k: int, seed: int = 0) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """In-memory ``(y, X, beta)``; ``X`` includes the constant column."""
    beta = synth_beta(k, seed)
    gen = np.random.default_rng([seed, 1])
    X = np.column_stack([np.ones(n), gen.uniform(size=(n, k - 1))])
    y = X @ beta + gen.normal(scale=np.sqrt(NOISE_VARIANCE), size=n)
    return y, X, beta


def column_names(k: int) -> list[str]:
    return ["y"] + [f"x{i}" for i in range(1, k)]


def sidecar_path(path: str | os.PathLike) -> str:
    return os.fspath(path) + ".json"


def write_synth(config: SynthConfig, path: str | os.PathLike) -> dict:
    """Write ``k`` columns (y, x1..x{k-1}) as CSV plus a JSON sidecar holding beta.

    Rows are generated in chunks so memory stays bounded for large ``n``.
    """
    beta = synth_beta(config.k, config.seed)
    gen = np.random.default_rng([config.seed, 1])
    header = ",".join(column_names(config.k))
    try:
        with open(path, "w") as fh:
            fh.write(header + "\n")
            left = config.n
            while left > 0:
                m = min(left, config.chunk_rows)
                Xs = gen.uniform(size=(m, config.k - 1))
                y = beta[0] + Xs @ beta[1:] + gen.normal(scale=np.sqrt(NOISE_VARIANCE), size=m)
                np.savetxt(fh, np.column_stack([y, Xs]), delimiter=",", fmt="%.17g")
                left -= m
        meta = {
            "schema": 1,
            "n": config.n,
            "k": config.k,
            "seed": config.seed,
            "noise_variance": NOISE_VARIANCE,
            "columns": column_names(config.k),
            "beta": beta.tolist(),
        }
        with open(sidecar_path(path), "w") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)
    except OSError as exc:
        raise IoError(str(exc)) from exc
    return meta
