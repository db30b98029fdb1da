import numpy as np
import pytest

from streamreg.accumulate import accumulate_source
from streamreg.errors import AllReplicatesSingular, SingletonCluster, StreamChanged, TooFewGroups, UsageError
from streamreg.inference import (
    BootstrapConfig,
    bootstrap_draws,
    bootstrap_replicate,
    cluster_bootstrap_vcv,
    cluster_scores,
    crve_vcv,
    hc1_meat,
    hc1_vcv,
)
from streamreg.ingest import ArraySource
from streamreg.linear import ols_fit
from streamreg.reference import DenseDataset, crve_sandwich, hc1_sandwich

from conftest import design, grouped, rel_close


def clustered(rng, n=1000, n_groups=20, k=3):
    g = rng.integers(0, n_groups, size=n)
    X = design(rng, n, k)
    X[:, 1:] += rng.normal(size=(n_groups, k - 1))[g]
    u = rng.normal(size=n_groups)[g] * 1.5 + rng.normal(size=n)
    y = X @ rng.normal(size=k) + u
    return y, X, np.array([f"c{v}" for v in g], dtype=object)


def first_pass(src):
    cp = accumulate_source(src)
    return cp, ols_fit(cp)


def test_hc1_homoscedastic_reduction():
    x = np.repeat(np.arange(1.0, 11.0), 2)
    s = np.tile([1.0, -1.0], 10)
    X = np.column_stack([np.ones(20), x])
    c = 2.5
    y = X @ [1.0, 0.5] + np.sqrt(c) * s
    src = ArraySource(y, X, block_size=3)
    cp, fit = first_pass(src)
    V = hc1_vcv(src, fit.coefficients, cp.sigma, cp.n, cp.k)
    assert rel_close(V, 20 / 18 * c * np.linalg.inv(X.T @ X), 1e-10)


def test_hc1_matches_sandwich_oracle(rng):
    X = design(rng, 1000, 5)
    y = X @ rng.normal(size=5) + rng.normal(size=1000) * (0.5 + np.abs(X[:, 1]))
    src = ArraySource(y, X, block_size=128)
    cp, fit = first_pass(src)
    V = hc1_vcv(src, fit.coefficients, cp.sigma, cp.n, cp.k)
    assert rel_close(V, hc1_sandwich(DenseDataset(y, X), fit.coefficients), 1e-8)
    assert src.passes == 2


def test_hc1_weighted_matches_oracle(rng):
    X = design(rng, 500, 3)
    w = rng.uniform(0.5, 2, size=500)
    y = X @ [1.0, 2.0, 3.0] + rng.normal(size=500) * (1 + X[:, 2] ** 2)
    src = ArraySource(y, X, w=w, block_size=50)
    cp, fit = first_pass(src)
    V = hc1_vcv(src, fit.coefficients, cp.sigma, cp.n, cp.k)
    assert rel_close(V, hc1_sandwich(DenseDataset(y, X, w=w), fit.coefficients), 1e-8)


def test_hc1_block_invariance_and_psd(rng):
    X = design(rng, 500, 3)
    y = rng.normal(size=500)
    beta = rng.normal(size=3)
    a = hc1_meat(ArraySource(y, X, block_size=1), beta).omega
    b = hc1_meat(ArraySource(y, X, block_size=250), beta).omega
    assert rel_close(a, b, 1e-10)
    assert np.all(np.linalg.eigvalsh(a) >= -1e-10 * np.trace(a))


def test_stream_changed(rng):
    X = design(rng, 100, 2)
    y = rng.normal(size=100)
    cp, fit = first_pass(ArraySource(y, X))
    with pytest.raises(StreamChanged):
        hc1_vcv(ArraySource(y[:90], X[:90]), fit.coefficients, cp.sigma, cp.n, cp.k)
    with pytest.raises(StreamChanged):
        crve_vcv(ArraySource(y[:90], X[:90], g=["a"] * 90), fit.coefficients, cp.sigma, cp.n, cp.k)


def test_crve_matches_oracle_and_scattering(rng):
    y, X, g = clustered(rng)
    src = ArraySource(y, X, g=g, block_size=37)
    cp, fit = first_pass(src)
    V = crve_vcv(src, fit.coefficients, cp.sigma, cp.n, cp.k, n_g=20)
    assert rel_close(V, crve_sandwich(DenseDataset(y, X, g=g), fit.coefficients), 1e-8)
    # same rows, clusters contiguous
    order = np.argsort(g, kind="stable")
    sorted_src = ArraySource(y[order], X[order], g=g[order], block_size=37)
    V2 = crve_vcv(sorted_src, fit.coefficients, cp.sigma, cp.n, cp.k)
    assert rel_close(V2, V, 1e-12)
    # scores sum to X'u, which vanishes at the OLS solution
    scores = cluster_scores(src, fit.coefficients).scores
    assert np.max(np.abs(sum(scores.values()))) <= 1e-6 * np.max(np.abs(cp.upsilon))
    assert np.array_equal(V, crve_vcv(src, fit.coefficients, cp.sigma, cp.n, cp.k))


def test_crve_singleton_clusters_equal_hc1(rng):
    X = design(rng, 200, 3)
    y = X @ [1.0, 1.0, 1.0] + rng.normal(size=200) * (1 + X[:, 1] ** 2)
    src = ArraySource(y, X, g=[str(i) for i in range(200)], block_size=16)
    cp, fit = first_pass(src)
    a = crve_vcv(src, fit.coefficients, cp.sigma, cp.n, cp.k)
    b = hc1_vcv(src, fit.coefficients, cp.sigma, cp.n, cp.k)
    assert rel_close(a, b, 1e-12)


def test_crve_needs_two_clusters(rng):
    X = design(rng, 30, 2)
    y = rng.normal(size=30)
    src = ArraySource(y, X, g=["a"] * 30)
    cp, fit = first_pass(src)
    with pytest.raises(SingletonCluster):
        crve_vcv(src, fit.coefficients, cp.sigma, cp.n, cp.k)


def test_bootstrap_identity_resample(rng):
    y, X, g = clustered(rng, 400, 10)
    ga = grouped(y, X, g)
    beta = ols_fit(ga.total).coefficients
    star = bootstrap_replicate(ga, np.arange(ga.n_groups))
    assert rel_close(star, beta, 1e-12)
    res = cluster_bootstrap_vcv(ga, BootstrapConfig(replications=5), sampler=lambda b, G: np.arange(G))
    assert np.allclose(res.replicates, beta, rtol=1e-12, atol=0)
    assert np.max(np.abs(res.vcv)) <= 1e-20


def test_bootstrap_single_replicate_is_zero(rng):
    y, X, g = clustered(rng, 300, 10)
    res = cluster_bootstrap_vcv(grouped(y, X, g), BootstrapConfig(replications=1, seed=3))
    assert np.array_equal(res.vcv, np.zeros((3, 3)))


def test_bootstrap_draws_are_reproducible():
    a = bootstrap_draws(7, 0, 20)
    assert np.array_equal(a, bootstrap_draws(7, 0, 20))
    assert not np.array_equal(a, bootstrap_draws(7, 1, 20))
    assert a.min() >= 0 and a.max() < 20


def test_bootstrap_close_to_crve(rng):
    y, X, g = clustered(rng)
    src = ArraySource(y, X, g=g, block_size=200)
    cp, fit = first_pass(src)
    crve = np.diag(crve_vcv(src, fit.coefficients, cp.sigma, cp.n, cp.k))
    ga = grouped(y, X, g)
    a = cluster_bootstrap_vcv(ga, BootstrapConfig(replications=2000, seed=11))
    b = cluster_bootstrap_vcv(ga, BootstrapConfig(replications=2000, seed=12))
    assert np.all(np.abs(np.diag(a.vcv) / crve - 1) <= 0.25)
    assert np.all(np.abs(np.diag(a.vcv) / np.diag(b.vcv) - 1) <= 0.25)
    again = cluster_bootstrap_vcv(ga, BootstrapConfig(replications=50, seed=11))
    assert np.array_equal(again.replicates, a.replicates[:50])


def test_bootstrap_failures(rng):
    # every group has a constant covariate value, so single-group resamples are singular
    g = np.repeat(np.array(["a", "b"], dtype=object), 10)
    X = np.column_stack([np.ones(20), np.repeat([0.0, 1.0], 10)])
    ga = grouped(rng.normal(size=20), X, g)
    with pytest.raises(AllReplicatesSingular):
        cluster_bootstrap_vcv(ga, BootstrapConfig(replications=20), sampler=lambda b, G: np.zeros(G, int))
    mixed = cluster_bootstrap_vcv(
        ga, BootstrapConfig(replications=20), sampler=lambda b, G: np.zeros(G, int) if b == 0 else np.arange(G)
    )
    assert mixed.failures == 1 and len(mixed.replicates) == 19
    with pytest.raises(TooFewGroups):
        cluster_bootstrap_vcv(grouped(rng.normal(size=5), np.ones((5, 1)), ["a"] * 5), BootstrapConfig())
    with pytest.raises(UsageError):
        BootstrapConfig(replications=0)
