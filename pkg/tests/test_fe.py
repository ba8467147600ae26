import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from eventpanel.errors import DegenerateRestriction, EmptySample, NoConvergence, SingleCluster
from eventpanel.fe import absorbed_dof, cluster_vcov, demean, drop_singletons, fe_ols, ols, wald_test

from oracles import cluster_sandwich, dummies, dummy_ols, identified, normal_equations


def test_one_way_demean():
    out = demean(np.array([1.0, 2.0, 3.0, 5.0]), [np.array(["A", "A", "B", "B"])])
    np.testing.assert_allclose(out, [-0.5, 0.5, -1.0, 1.0], atol=1e-14)


def test_group_constant_values_vanish():
    g1 = np.array([0, 0, 1, 1, 2, 2])
    g2 = np.array([0, 1, 0, 1, 0, 1])
    vals = np.array([1.0, 1.0, 3.0, 3.0, -2.0, -2.0]) + np.array([5.0, 7.0] * 3)
    np.testing.assert_allclose(demean(vals, [g1, g2]), 0.0, atol=1e-9)


def test_two_way_matches_projection():
    g1 = np.array([0, 0, 1, 1, 2, 2])
    g2 = np.array([0, 1, 0, 1, 1, 0])
    v = np.array([0.3, -1.2, 2.5, 0.7, 1.1, -0.4])
    D = np.column_stack([dummies(g1), dummies(g2)])
    proj = v - D @ np.linalg.lstsq(D, v, rcond=None)[0]
    np.testing.assert_allclose(demean(v, [g1, g2], tol=1e-14), proj, atol=1e-10)


def test_no_convergence():
    rng = np.random.default_rng(0)
    g1, g2 = rng.integers(0, 30, 400), rng.integers(0, 30, 400)
    with pytest.raises(NoConvergence):
        demean(rng.normal(size=400), [g1, g2], tol=1e-15, max_iter=2)


def test_exact_fit_and_duplicate_column():
    x = np.arange(1.0, 11.0)
    res = ols(x, 2 * x)
    assert res.coefficients[0] == pytest.approx(2.0)
    np.testing.assert_allclose(res.residuals, 0.0, atol=1e-12)
    res = ols(np.column_stack([x, x]), 2 * x, names=["a", "b"])
    assert res.names == ("a",)
    assert res.dropped == ("b",)


def test_ols_matches_normal_equations(rng):
    X = rng.normal(size=(50, 3))
    y = X @ [1.0, -2.0, 0.5] + rng.normal(size=50)
    np.testing.assert_allclose(ols(X, y).coefficients, normal_equations(X, y), atol=1e-10)


def test_singletons_dropped_iteratively():
    # period 2 is seen once; dropping it leaves unit 2 with a single cell
    unit = np.array([0, 0, 1, 1, 2, 2])
    period = np.array([0, 1, 0, 1, 2, 1])
    keep = drop_singletons([unit, period])
    np.testing.assert_array_equal(keep, [True, True, True, True, False, False])
    res = fe_ols(np.arange(6.0) ** 2, np.arange(6.0) ** 3, [unit, period])
    assert res.n_singletons == 2
    assert res.n_obs == 4


def test_absorbed_dof():
    unit = np.repeat(np.arange(4), 3)
    period = np.tile(np.arange(3), 4)
    assert absorbed_dof([unit]) == 4
    assert absorbed_dof([unit, period]) == 4 + 3 - 1


@pytest.mark.parametrize("seed", range(10))
def test_fe_ols_matches_dummy_oracle(seed):
    rng = np.random.default_rng(seed)
    n = 120
    groups = [rng.integers(0, 10, n), rng.integers(0, 6, n), rng.integers(0, 3, n)]
    X = rng.normal(size=(n, 2))
    y = X @ [0.5, -1.0] + rng.normal(size=n)
    w = rng.uniform(0.5, 2.0, n)
    res = fe_ols(y, X, groups, weights=w, tol=1e-13, singletons=False)
    beta, resid, fe_rank = dummy_ols(y, X, groups, w)
    np.testing.assert_allclose(res.coefficients, beta, atol=1e-8)
    np.testing.assert_allclose(res.residuals, resid, atol=1e-8)
    assert res.dof_residual == n - 2 - fe_rank


def test_cluster_vcov_matches_formula(rng):
    n = 20
    clusters = np.repeat(np.arange(4), 5)
    X = np.column_stack([np.ones(n), rng.normal(size=(n, 2))])
    y = X @ [1.0, 0.3, -0.2] + rng.normal(size=n)
    res = ols(X, y)
    V = cluster_vcov(res, clusters)
    np.testing.assert_allclose(V, cluster_sandwich(X, res.residuals, clusters, 3), atol=1e-10)


def test_own_cluster_is_hc1(rng):
    n = 30
    X = np.column_stack([np.ones(n), rng.normal(size=n)])
    y = X @ [1.0, 2.0] + rng.normal(size=n)
    res = ols(X, y)
    bread = np.linalg.inv(X.T @ X)
    hc0 = bread @ (X * res.residuals[:, None] ** 2).T @ X @ bread
    V = cluster_vcov(res, np.arange(n))
    np.testing.assert_allclose(V, hc0 * n / (n - 1) * (n - 1) / (n - 2), atol=1e-12)


def test_identical_clusters_double_meat(rng):
    X1 = np.column_stack([np.ones(6), rng.normal(size=6)])
    y1 = rng.normal(size=6)
    X, y = np.vstack([X1, X1]), np.r_[y1, y1]
    res = ols(X, y)
    one = (X1 * res.residuals[:6, None]).sum(axis=0)
    V = cluster_vcov(res, np.repeat([0, 1], 6), small_sample=False)
    bread = np.linalg.inv(X.T @ X)
    np.testing.assert_allclose(V, bread @ (2 * np.outer(one, one)) @ bread, atol=1e-12)


def test_single_cluster():
    res = ols(np.ones((5, 1)), np.arange(5.0))
    with pytest.raises(SingleCluster):
        cluster_vcov(res, np.zeros(5))


def test_empty_sample():
    with pytest.raises(EmptySample):
        fe_ols(np.full(3, np.nan), np.ones((3, 1)))


def test_wald_identities(rng):
    X = rng.normal(size=(80, 3))
    y = X @ [0.0, 1.0, -1.0] + rng.normal(size=80)
    res = ols(X, y)
    t = res.coefficients[1] / res.ses[1]
    w = wald_test(res, [[0, 1, 0]])
    assert w.statistic == pytest.approx(t**2, rel=1e-12)
    assert w.p_value == pytest.approx(2 * stats.norm.sf(abs(t)), rel=1e-10)

    class Exact:
        coefficients = np.array([0.0, 0.0, 3.0])
        vcov = np.eye(3)

    w0 = wald_test(Exact, np.eye(3)[:2])
    assert (w0.statistic, w0.p_value) == (0.0, 1.0)


def test_wald_degenerate():
    class Zero:
        coefficients = np.array([1.0, 2.0])
        vcov = np.zeros((2, 2))

    with pytest.raises(DegenerateRestriction):
        wald_test(Zero, [[1.0, 0.0]])
    with pytest.raises(DegenerateRestriction):
        wald_test(Zero, [[1.0, 0.0, 0.0]])


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_demean_is_idempotent_projection(seed):
    rng = np.random.default_rng(seed)
    n = 60
    groups = [rng.integers(0, 7, n), rng.integers(0, 4, n)]
    v = rng.normal(size=n)
    once = demean(v, groups, tol=1e-13)
    np.testing.assert_allclose(demean(once, groups, tol=1e-13), once, atol=1e-9)
    # residual is orthogonal to every dummy
    for g in groups:
        np.testing.assert_allclose(dummies(g).T @ once, 0.0, atol=1e-8)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.1, 10.0))
def test_coefficients_scale_with_outcome(seed, c):
    rng = np.random.default_rng(seed)
    n = 60
    groups = [rng.integers(0, 6, n), rng.integers(0, 5, n)]
    X = rng.normal(size=(n, 2))
    y = rng.normal(size=n)
    if not identified(X, groups):
        return
    a = fe_ols(y, X, groups, tol=1e-13, singletons=False)
    b = fe_ols(c * y, X, groups, tol=1e-13, singletons=False)
    np.testing.assert_allclose(b.coefficients, c * a.coefficients, rtol=1e-7, atol=1e-9)
