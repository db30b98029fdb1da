"""Brute-force in-memory reference estimators.

Everything here works on full data matrices held in memory and is written
independently of the streaming code paths (no cross products are reused,
residuals are formed explicitly). The test suite checks the streaming
estimators against these; they are also handy for verifying results on a
sample that fits in memory.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import RankDeficient
from .results import FitResult


@dataclass
class DenseDataset:
    y: np.ndarray
    X: np.ndarray
    w: np.ndarray | None = None
    Z: np.ndarray | None = None
    g: np.ndarray | None = None
    t: np.ndarray | None = None
    intercept: bool = True

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=float)
        self.X = np.asarray(self.X, dtype=float)
        if self.w is not None:
            self.w = np.asarray(self.w, dtype=float)
        if self.Z is not None:
            self.Z = np.asarray(self.Z, dtype=float)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def k(self) -> int:
        return self.X.shape[1]

    def sqrt_weighted(self):
        """(y, X, Z) premultiplied by sqrt(w)."""
        if self.w is None:
            return self.y, self.X, self.Z
        r = np.sqrt(self.w)
        Z = None if self.Z is None else self.Z * r[:, None]
        return self.y * r, self.X * r[:, None], Z


def naive_gauss_jordan(A, b) -> np.ndarray:
    """Textbook Gauss-Jordan elimination without pivoting."""
    M = np.column_stack([np.asarray(A, dtype=float), np.asarray(b, dtype=float)])
    n = M.shape[0]
    for i in range(n):
        if M[i, i] == 0:
            raise RankDeficient("zero pivot")
        M[i] = M[i] / M[i, i]
        for r in range(n):
            if r != i:
                M[r] = M[r] - M[r, i] * M[i]
    return M[:, n]


def _full_rank_inv(A: np.ndarray) -> np.ndarray:
    if np.linalg.matrix_rank(A) < A.shape[0]:
        raise RankDeficient("singular design")
    return np.linalg.inv(A)


def _goodness(y, yhat, u, k, intercept, w=None):
    n = y.shape[0]
    w = np.ones(n) if w is None else w
    rss = float(np.sum(w * u**2))
    ybar = np.sum(w * y) / np.sum(w)
    tss = float(np.sum(w * (y - ybar) ** 2))
    dof = n - k
    if tss <= 1e-12 * n:
        r2 = adj = 0.0
        f = None
    else:
        r2 = 1 - rss / tss
        adj = 1 - (1 - r2) * (n - 1) / dof
        f = ((tss - rss) / (k - 1)) / (rss / dof) if intercept and k > 1 and rss > 0 else None
    return dict(rss=rss, tss=tss, r2=r2, adj_r2=adj, f_stat=f, sigma2=rss / dof, dof=dof)


def _to_result(beta, vcv, good, n, k, method, vcv_kind="iid") -> FitResult:
    return FitResult(
        coefficients=beta,
        vcv=vcv,
        sigma2=good["sigma2"],
        r2=good["r2"],
        adj_r2=good["adj_r2"],
        f_stat=good["f_stat"],
        dof_resid=good["dof"],
        n=n,
        k=k,
        method=method,
        vcv_kind=vcv_kind,
        rss=good["rss"],
        tss=good["tss"],
    )


def ols(ds: DenseDataset) -> FitResult:
    y, X, _ = ds.sqrt_weighted()
    inv = _full_rank_inv(X.T @ X)
    beta = inv @ (X.T @ y)
    u = ds.y - ds.X @ beta
    good = _goodness(ds.y, ds.X @ beta, u, ds.k, ds.intercept, ds.w)
    return _to_result(beta, good["sigma2"] * inv, good, ds.n, ds.k, "ols" if ds.w is None else "wls")


def iv(ds: DenseDataset) -> FitResult:
    y, X, Z = ds.sqrt_weighted()
    zx_inv = _full_rank_inv(Z.T @ X)
    beta = zx_inv @ (Z.T @ y)
    u = ds.y - ds.X @ beta
    good = _goodness(ds.y, ds.X @ beta, u, ds.k, ds.intercept, ds.w)
    vcv = good["sigma2"] * zx_inv @ (Z.T @ Z) @ zx_inv.T
    return _to_result(beta, vcv, good, ds.n, ds.k, "iv")


def tsls(ds: DenseDataset) -> FitResult:
    y, X, Z = ds.sqrt_weighted()
    # first stage: fitted values of X on Z (the projection, without forming the N x N matrix)
    Xhat = Z @ (_full_rank_inv(Z.T @ Z) @ (Z.T @ X))
    inv = _full_rank_inv(Xhat.T @ X)
    beta = inv @ (Xhat.T @ y)
    u = ds.y - ds.X @ beta
    good = _goodness(ds.y, ds.X @ beta, u, ds.k, ds.intercept, ds.w)
    return _to_result(beta, good["sigma2"] * inv, good, ds.n, ds.k, "2sls")


def penalty_mask(k: int, intercept: bool, penalize_intercept: bool = False) -> np.ndarray:
    m = np.ones(k)
    if intercept and not penalize_intercept:
        m[0] = 0
    return m


def ridge(ds: DenseDataset, lam: float, penalize_intercept: bool = False) -> FitResult:
    y, X, _ = ds.sqrt_weighted()
    D = np.diag(penalty_mask(ds.k, ds.intercept, penalize_intercept))
    beta = np.linalg.solve(X.T @ X + lam * D, X.T @ y)
    u = ds.y - ds.X @ beta
    good = _goodness(ds.y, ds.X @ beta, u, ds.k, ds.intercept, ds.w)
    return _to_result(beta, None, good, ds.n, ds.k, "ridge", "none")


def coordinate_descent_raw(
    ds: DenseDataset,
    lambda1: float,
    lambda2: float = 0.0,
    penalize_intercept: bool = False,
    tol: float = 1e-12,
    max_iter: int = 100_000,
) -> np.ndarray:
    """Textbook cyclic coordinate descent on raw rows, tracking the residual vector.

    Minimizes ``0.5 ||y - Xb||^2 + lambda1 |b|_1 + 0.5 lambda2 |b|^2`` (penalties
    skip an unpenalized intercept).
    """
    y, X, _ = ds.sqrt_weighted()
    mask = penalty_mask(ds.k, ds.intercept, penalize_intercept)
    beta = np.zeros(ds.k)
    r = y.copy()
    col_ss = np.sum(X**2, axis=0)
    for _ in range(max_iter):
        biggest = 0.0
        for j in range(ds.k):
            xj = X[:, j]
            rho = xj @ r + col_ss[j] * beta[j]
            t = lambda1 * mask[j]
            z = np.sign(rho) * max(abs(rho) - t, 0.0)
            new = z / (col_ss[j] + lambda2 * mask[j])
            if new != beta[j]:
                r -= xj * (new - beta[j])
                biggest = max(biggest, abs(new - beta[j]))
                beta[j] = new
        if biggest < tol:
            break
    return beta


def newton_glm(ds: DenseDataset, link: str = "logit", tol: float = 1e-12, max_iter: int = 200) -> FitResult:
    """Full-data Newton-Raphson for logit or probit."""
    X, y = ds.X, ds.y
    w = np.ones(ds.n) if ds.w is None else ds.w
    beta = np.zeros(ds.k)
    for _ in range(max_iter):
        eta = X @ beta
        if link == "logit":
            p = 1.0 / (1.0 + np.exp(-eta))
            grad = X.T @ (w * (y - p))
            H = (X * (w * p * (1 - p))[:, None]).T @ X
        else:
            cdf = stats.norm.cdf(eta)
            pdf = stats.norm.pdf(eta)
            a = pdf / cdf
            b = pdf / stats.norm.sf(eta)
            grad = X.T @ (w * (y * a - (1 - y) * b))
            H = (X * (w * (y * a * (a + eta) + (1 - y) * b * (b - eta)))[:, None]).T @ X
        step = np.linalg.solve(H, grad)
        beta = beta + step
        if np.max(np.abs(step)) < tol:
            break
    vcv = np.linalg.inv(H)
    good = dict(rss=None, tss=None, r2=np.nan, adj_r2=np.nan, f_stat=None, sigma2=1.0, dof=ds.n - ds.k)
    return _to_result(beta, vcv, good, ds.n, ds.k, link)


def loglik(ds: DenseDataset, beta, link: str = "logit") -> float:
    eta = ds.X @ beta
    if link == "logit":
        ll = ds.y * eta - np.log1p(np.exp(eta))
    else:
        ll = ds.y * stats.norm.logcdf(eta) + (1 - ds.y) * stats.norm.logsf(eta)
    return float(np.sum(ll if ds.w is None else ds.w * ll))


def dummies(keys) -> tuple[np.ndarray, list]:
    """Indicator matrix with one column per distinct key (first-appearance order)."""
    keys = np.asarray(keys, dtype=object)
    levels = list(dict.fromkeys(keys.tolist()))
    index = {v: i for i, v in enumerate(levels)}
    D = np.zeros((keys.shape[0], len(levels)))
    D[np.arange(keys.shape[0]), [index[v] for v in keys.tolist()]] = 1.0
    return D, levels


def dummy_fe(ds: DenseDataset, slope_cols=None) -> FitResult:
    """OLS of y on the slope columns plus a full set of group indicators (no constant)."""
    cols = np.arange(1, ds.k) if (slope_cols is None and ds.intercept) else (slope_cols if slope_cols is not None else np.arange(ds.k))
    D, _ = dummies(ds.g)
    full = np.column_stack([ds.X[:, cols], D])
    sub = DenseDataset(ds.y, full, w=ds.w, intercept=False)
    return ols(sub)


def dummy_fe2(ds: DenseDataset) -> FitResult:
    """OLS with group indicators and all but one period indicator."""
    cols = np.arange(1, ds.k) if ds.intercept else np.arange(ds.k)
    Dg, _ = dummies(ds.g)
    Dt, _ = dummies(ds.t)
    full = np.column_stack([ds.X[:, cols], Dg, Dt[:, 1:]])
    return ols(DenseDataset(ds.y, full, w=ds.w, intercept=False))


def demeaned_gram(ds: DenseDataset, cols) -> np.ndarray:
    """X'X of the explicitly group-demeaned columns."""
    Xs = ds.X[:, cols].copy()
    keys = np.asarray(ds.g, dtype=object)
    for level in dict.fromkeys(keys.tolist()):
        m = keys == level
        Xs[m] -= Xs[m].mean(axis=0)
    return Xs.T @ Xs


def hc1_sandwich(ds: DenseDataset, beta) -> np.ndarray:
    _, X, _ = ds.sqrt_weighted()
    u = ds.y - ds.X @ beta
    wu = u if ds.w is None else u * ds.w
    bread = np.linalg.inv(X.T @ X)
    meat = (ds.X * (wu**2)[:, None]).T @ ds.X
    return ds.n / (ds.n - ds.k) * bread @ meat @ bread


def crve_sandwich(ds: DenseDataset, beta) -> np.ndarray:
    _, X, _ = ds.sqrt_weighted()
    u = ds.y - ds.X @ beta
    wu = u if ds.w is None else u * ds.w
    bread = np.linalg.inv(X.T @ X)
    keys = np.asarray(ds.g, dtype=object)
    meat = np.zeros((ds.k, ds.k))
    levels = list(dict.fromkeys(keys.tolist()))
    for level in levels:
        m = keys == level
        s = ds.X[m].T @ wu[m]
        meat += np.outer(s, s)
    G = len(levels)
    factor = (ds.n - 1) / (ds.n - ds.k) * G / (G - 1)
    return factor * bread @ meat @ bread


def kfold_mse(ds: DenseDataset, folds, fit) -> np.ndarray:
    """Held-out MSE per fold, re-reading raw rows; ``fit(train_ds) -> beta``."""
    folds = np.asarray(folds)
    out = []
    for f in list(dict.fromkeys(folds.tolist())):
        test = folds == f
        train = DenseDataset(
            ds.y[~test], ds.X[~test], w=None if ds.w is None else ds.w[~test], intercept=ds.intercept
        )
        beta = fit(train)
        u = ds.y[test] - ds.X[test] @ beta
        out.append(float(np.sum(u**2) / test.sum()))
    return np.array(out)


def oracle_fit(ds: DenseDataset, model: str = "ols", vcv: str = "iid", **kw) -> FitResult:
    """Dispatch to the brute-force estimator named by ``model`` / ``vcv``."""
    if model in ("ols", "wls"):
        res = ols(ds)
    elif model == "iv":
        res = iv(ds)
    elif model == "2sls":
        res = tsls(ds)
    elif model == "ridge":
        return ridge(ds, kw.get("lam", 0.0), kw.get("penalize_intercept", False))
    elif model in ("logit", "probit"):
        return newton_glm(ds, model)
    else:
        raise ValueError(f"no reference implementation for {model!r}")
    if vcv == "hc1":
        res.vcv, res.vcv_kind = hc1_sandwich(ds, res.coefficients), "hc1"
    elif vcv == "cluster":
        res.vcv, res.vcv_kind = crve_sandwich(ds, res.coefficients), "cluster"
    return res
