import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from streamreg.errors import InsufficientObservations, RankDeficient, TooManyGroups, UnbalancedPanel, UnknownGroup
from streamreg.linear import ols_fit
from streamreg.panel import (
    check_balanced,
    fe_recover_effects,
    fe_twoway_fit,
    fe_within_fit,
    group_summaries,
    subsample_fit,
)
from streamreg.reference import DenseDataset, demeaned_gram, dummy_fe, dummy_fe2, ols

from conftest import cross_products, grouped, rel_close


def panel(rng, n, n_groups, k_slopes, unequal=True):
    g = rng.integers(0, n_groups, size=n) if unequal else np.repeat(np.arange(n_groups), n // n_groups)
    g = np.array([f"g{v:02d}" for v in g], dtype=object)
    mu = {key: rng.normal(scale=3) for key in set(g)}
    shift = np.array([mu[v] for v in g])
    Xs = rng.normal(size=(n, k_slopes)) + shift[:, None] * 0.5
    y = Xs @ rng.normal(size=k_slopes) + shift + rng.normal(size=n)
    X = np.column_stack([np.ones(n), Xs])
    return y, X, g


def test_within_matches_dummy_oracle(rng):
    y, X, g = panel(rng, 1200, 30, 3)
    fe = fe_within_fit(grouped(y, X, g, block_size=101)).fit
    ref = dummy_fe(DenseDataset(y, X, g=g))
    assert rel_close(fe.coefficients, ref.coefficients[:3], 1e-8)
    assert rel_close(fe.vcv, ref.vcv[:3, :3], 1e-8)
    assert fe.sigma2 == pytest.approx(ref.sigma2, rel=1e-8)
    assert fe.dof_resid == 1200 - 3 - 30
    assert fe.names is None or len(fe.names) == 3


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 10**6), n=st.integers(200, 2000), n_groups=st.integers(2, 50))
def test_dummy_equivalence_random(seed, n, n_groups):
    rng = np.random.default_rng(seed)
    y, X, g = panel(rng, n, n_groups, 2)
    ga = grouped(y, X, g, block_size=97)
    fe = fe_within_fit(ga).fit
    ref = dummy_fe(DenseDataset(y, X, g=g))
    assert rel_close(fe.coefficients, ref.coefficients[:2], 1e-8)
    # within identity against explicit demeaning of raw columns
    cols = np.arange(1, 3)
    sxx = ga.total.sigma[np.ix_(cols, cols)] - sum(np.outer(c.sum_x[cols], c.sum_x[cols]) / c.sum_w for c in ga.groups.values())
    assert rel_close(sxx, demeaned_gram(DenseDataset(y, X, g=g), cols), 1e-8)


def test_single_group_is_demeaned_ols(rng):
    y, X, _ = panel(rng, 100, 1, 2)
    g = np.array(["only"] * 100, dtype=object)
    fe = fe_within_fit(grouped(y, X, g)).fit
    Xd = X[:, 1:] - X[:, 1:].mean(0)
    beta = np.linalg.lstsq(Xd, y - y.mean(), rcond=None)[0]
    assert rel_close(fe.coefficients, beta, 1e-10)
    assert rel_close(fe.coefficients, ols_fit(cross_products(y, X)).coefficients[1:], 1e-10)


def test_no_within_variation(rng):
    g = np.repeat(np.array(["a", "b", "c"], dtype=object), 10)
    x = np.repeat([1.0, 2.0, 5.0], 10)
    X = np.column_stack([np.ones(30), x])
    with pytest.raises(RankDeficient):
        fe_within_fit(grouped(rng.normal(size=30), X, g))


def balanced(rng, G, T, k_slopes=2):
    g = np.repeat(np.array([f"g{i}" for i in range(G)], dtype=object), T)
    t = np.tile(np.array([f"t{i}" for i in range(T)], dtype=object), G)
    a = np.repeat(rng.normal(size=G), T)
    b = np.tile(rng.normal(size=T), G)
    Xs = rng.normal(size=(G * T, k_slopes)) + a[:, None]
    y = Xs @ rng.normal(size=k_slopes) + a + b + rng.normal(size=G * T)
    return y, np.column_stack([np.ones(G * T), Xs]), g, t


def test_twoway_matches_dummy_oracle(rng):
    y, X, g, t = balanced(rng, 10, 10)
    fe = fe_twoway_fit(grouped(y, X, g, t=t, block_size=13)).fit
    ref = dummy_fe2(DenseDataset(y, X, g=g, t=t))
    assert rel_close(fe.coefficients, ref.coefficients[:2], 1e-8)
    assert rel_close(fe.vcv, ref.vcv[:2, :2], 1e-8)
    assert fe.dof_resid == 100 - 2 - 10 - 10 + 1


def test_twoway_single_period_is_oneway(rng):
    y, X, g = panel(rng, 80, 8, 2, unequal=False)
    t = np.array(["2020"] * 80, dtype=object)
    ga = grouped(y, X, g, t=t)
    assert rel_close(fe_twoway_fit(ga).fit.coefficients, fe_within_fit(ga).fit.coefficients, 1e-10)


def test_twoway_identity_when_means_are_zero(rng):
    G, T = 6, 5
    cols = []
    for _ in range(2):
        M = rng.normal(size=(G, T))
        M = M - M.mean(1, keepdims=True) - M.mean(0, keepdims=True) + M.mean()
        cols.append(M.ravel())
    Xs = np.column_stack(cols)
    g = np.repeat(np.arange(G), T).astype(str).astype(object)
    t = np.tile(np.arange(T), G).astype(str).astype(object)
    y = Xs @ [1.0, -1.0] + rng.normal(size=G * T)
    X = np.column_stack([np.ones(G * T), Xs])
    fe = fe_twoway_fit(grouped(y, X, g, t=t)).fit
    plain = ols_fit(cross_products(y, Xs, intercept=False))
    assert rel_close(fe.coefficients, plain.coefficients, 1e-10)


def test_unbalanced_rejected(rng):
    y, X, g, t = balanced(rng, 4, 3)
    ga = grouped(y[:-1], X[:-1], g[:-1], t=t[:-1])
    with pytest.raises(UnbalancedPanel):
        check_balanced(ga)
    with pytest.raises(UnbalancedPanel):
        fe_twoway_fit(ga)
    with pytest.raises(UnbalancedPanel):
        fe_twoway_fit(grouped(y, X, g, t=t), balanced=False)


def test_recover_effects_match_dummy_oracle(rng):
    y, X, g = panel(rng, 1200, 30, 3)
    ga = grouped(y, X, g, block_size=64)
    rec = fe_recover_effects(ga)
    ref = dummy_fe(DenseDataset(y, X, g=g))
    order = list(dict.fromkeys(g.tolist()))
    idx = [order.index(lbl) for lbl in ga.labels]
    ref_coef = np.concatenate([ref.coefficients[:3], ref.coefficients[3:][idx]])
    ref_se = np.concatenate([ref.std_errors[:3], ref.std_errors[3:][idx]])
    assert len(rec.coefficients) == 3 + 30
    assert rel_close(rec.coefficients, ref_coef, 1e-8)
    assert rel_close(np.sqrt(np.diag(rec.vcv)), ref_se, 1e-8)
    effects = np.array([rec.recovered_effects[lbl] for lbl in ga.labels])
    assert rel_close(effects[:, 0], ref_coef[3:], 1e-8) and rel_close(effects[:, 1], ref_se[3:], 1e-8)
    assert rel_close(rec.fit.coefficients, fe_within_fit(ga).fit.coefficients, 1e-8)
    assert rec.names[3] == f"fe[{ga.labels[0]}]"


def test_recover_effects_saturated_and_cap(rng):
    g = np.array([f"g{i}" for i in range(6)], dtype=object)
    X = np.column_stack([np.ones(6), rng.normal(size=6)])
    with pytest.raises(InsufficientObservations):
        fe_recover_effects(grouped(rng.normal(size=6), X, g))
    y, X, g = panel(rng, 200, 10, 1)
    with pytest.raises(TooManyGroups):
        fe_recover_effects(grouped(y, X, g), max_groups=5)


def test_subsample(rng):
    y, X, g = panel(rng, 600, 6, 2)
    ga = grouped(y, X, g, block_size=50)
    full = ols_fit(ga.total)
    assert rel_close(subsample_fit(ga, ga.labels).coefficients, full.coefficients, 1e-12)
    one = ga.labels[0]
    mask = g == one
    raw = ols(DenseDataset(y[mask], X[mask]))
    assert rel_close(subsample_fit(ga, [one]).coefficients, raw.coefficients, 1e-10)
    A, B = ga.labels[:2], ga.labels[2:4]
    union = subsample_fit(ga, A + B).coefficients
    merged = ols_fit(ga.merged(A) + ga.merged(B)).coefficients
    assert rel_close(union, merged, 1e-12)
    with pytest.raises(UnknownGroup):
        subsample_fit(ga, [])


def test_group_summaries(rng):
    y, X, g = panel(rng, 100, 4, 1)
    ga = grouped(y, X, g)
    for s in group_summaries(ga):
        mask = g == s.group
        assert s.n == mask.sum() and s.ybar == pytest.approx(y[mask].mean())
        assert np.allclose(s.xbar, X[mask].mean(0))
