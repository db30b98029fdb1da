"""Block-size benchmark: time an OLS fit for each block size and record the tracked state."""

from __future__ import annotations

import csv
import io
import os
import platform
import statistics
import sys
import time
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

import numpy as np

from .accumulate import accumulate_source
from .errors import UsageError
from .ingest import Source
from .linear import ols_fit


@dataclass
class BenchRow:
    block_size: int
    mean_seconds: float
    std_seconds: float
    min_seconds: float
    state_bytes: int
    passes: int
    repetitions: int
    coefficients: list[np.ndarray] = field(default_factory=list)


@dataclass
class BenchReport:
    rows: list[BenchRow]
    environment: str

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["block_size", "mean_seconds", "std_seconds", "min_seconds", "state_bytes", "passes", "repetitions"])
        for r in self.rows:
            w.writerow(
                [r.block_size, f"{r.mean_seconds:.6f}", f"{r.std_seconds:.6f}", f"{r.min_seconds:.6f}",
                 r.state_bytes, r.passes, r.repetitions]
            )
        return buf.getvalue()


def peak_rss_bytes() -> int | None:
    """Peak resident set size of this process, where the platform reports it."""
    try:
        import resource
    except ImportError:
        return None
    peak = resource.getrusage(resource.RUSAGE_SELF).ru_maxrss
    return peak if sys.platform == "darwin" else peak * 1024


def environment_summary() -> str:
    rss = peak_rss_bytes()
    parts = [
        f"python={platform.python_version()}",
        f"numpy={np.__version__}",
        f"platform={platform.platform()}",
        f"cpus={os.cpu_count()}",
    ]
    if rss is not None:
        parts.append(f"peak_rss_mb={rss / 2**20:.1f}")
    return "; ".join(parts)


def time_fit(source: Source, names=None, intercept: bool = True) -> tuple[float, np.ndarray, int]:
    """Wall time of one accumulate-and-solve pass; returns (seconds, beta, state bytes)."""
    t0 = time.perf_counter()
    cp = accumulate_source(source, names=names, intercept=intercept)
    beta = ols_fit(cp).coefficients
    return time.perf_counter() - t0, beta, cp.nbytes


def run_bench(
    make_source: Callable[[int], Source],
    block_sizes: Sequence[int],
    repetitions: int = 3,
    names=None,
    intercept: bool = True,
) -> BenchReport:
    """``make_source(block_size)`` must return a fresh source with a ``passes`` counter."""
    if repetitions < 1:
        raise UsageError("repetitions must be >= 1")
    if any(b < 1 for b in block_sizes):
        raise UsageError("block sizes must be >= 1")
    rows = []
    for b in block_sizes:
        times, coefs, nbytes, passes = [], [], 0, 0
        for _ in range(repetitions):
            source = make_source(b)
            seconds, beta, nbytes = time_fit(source, names, intercept)
            times.append(seconds)
            coefs.append(beta)
            passes = getattr(source, "passes", 1)
        rows.append(
            BenchRow(
                block_size=b,
                mean_seconds=statistics.fmean(times),
                std_seconds=statistics.stdev(times) if len(times) > 1 else 0.0,
                min_seconds=min(times),
                state_bytes=nbytes,
                passes=passes,
                repetitions=repetitions,
                coefficients=coefs,
            )
        )
    return BenchReport(rows=rows, environment=environment_summary())
