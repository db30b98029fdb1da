from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np
from scipy import stats

if TYPE_CHECKING:
    from .accumulate import CrossProducts

VCV_KINDS = ("iid", "hc1", "cluster", "cluster-bootstrap", "none")


@dataclass
class FitResult:
    coefficients: np.ndarray
    vcv: np.ndarray | None
    sigma2: float
    r2: float
    adj_r2: float
    f_stat: float | None
    dof_resid: int
    n: int
    k: int
    method: str
    vcv_kind: str = "iid"
    skipped_rows: int = 0
    names: list[str] | None = None
    sigma2_raw: float | None = None
    rss: float | None = None
    tss: float | None = None
    degenerate_variance: bool = False
    passes: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def std_errors(self) -> np.ndarray | None:
        if self.vcv is None:
            return None
        return np.sqrt(np.clip(np.diag(self.vcv), 0.0, None))

    @property
    def t_stats(self) -> np.ndarray | None:
        se = self.std_errors
        if se is None:
            return None
        with np.errstate(divide="ignore", invalid="ignore"):
            return self.coefficients / se

    @property
    def p_values(self) -> np.ndarray | None:
        t = self.t_stats
        if t is None:
            return None
        if self.method in ("logit", "probit"):
            return 2 * stats.norm.sf(np.abs(t))
        return 2 * stats.t.sf(np.abs(t), self.dof_resid)

    def to_dict(self) -> dict:
        def num(v):
            if v is None:
                return None
            v = float(v)
            return v if math.isfinite(v) else None

        def vec(a):
            return None if a is None else [num(v) for v in np.asarray(a)]

        names = self.names or [f"x{i}" for i in range(self.k)]
        return {
            "schema": 1,
            "method": self.method,
            "vcv_kind": self.vcv_kind,
            "names": list(names),
            "coefficients": vec(self.coefficients),
            "std_errors": vec(self.std_errors),
            "t_stats": vec(self.t_stats),
            "p_values": vec(self.p_values),
            "vcv": None if self.vcv is None else [vec(r) for r in self.vcv],
            "sigma2": num(self.sigma2),
            "r2": num(self.r2),
            "adj_r2": num(self.adj_r2),
            "f_stat": num(self.f_stat),
            "n": self.n,
            "k": self.k,
            "dof": self.dof_resid,
            "passes": self.passes,
            "skipped_rows": self.skipped_rows,
            "degenerate_variance": self.degenerate_variance,
            **{k: v for k, v in self.meta.items()},
        }


def fit_statistics(cp: CrossProducts, rss_raw: float, k: int, dof: int) -> dict:
    """Residual variance, R-squared and the global F statistic from aggregates.

    ``k`` counts estimated coefficients including the intercept.
    """
    sigma2_raw = rss_raw / dof
    rss = max(rss_raw, 0.0)
    sigma2 = max(sigma2_raw, 0.0)
    tss = cp.psi - cp.sum_y**2 / cp.sum_w if cp.sum_w > 0 else 0.0
    degenerate = tss <= 1e-12 * cp.n
    if degenerate:
        r2 = adj_r2 = 0.0
    else:
        r2 = 1.0 - rss / tss
        adj_r2 = 1.0 - (1.0 - r2) * (cp.n - 1) / dof
    f_stat = None
    if cp.intercept and k > 1 and not degenerate:
        num = (tss - rss) / (k - 1)
        f_stat = math.inf if rss == 0 else num / (rss / dof)
    return dict(
        sigma2=sigma2,
        sigma2_raw=sigma2_raw,
        rss=rss,
        tss=tss,
        r2=r2,
        adj_r2=adj_r2,
        f_stat=f_stat,
        degenerate_variance=degenerate,
    )
