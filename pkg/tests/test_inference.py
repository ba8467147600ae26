import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eventpanel.errors import InfeasibleLP, MissingCoefficient
from eventpanel.estimators import CoefficientPath, EventStudySpec
from eventpanel.estimators.twfe import fit_design, twfe_design, twfe_event_study
from eventpanel.fe import fe_ols
from eventpanel.inference import (
    M_GRID,
    average_post_effect,
    honest_rm_interval,
    mde,
    normal_quantile,
    rm_bounds,
    sensitivity,
)
from eventpanel.simulate import StructuralParams, TimingProcess, simulate_panel

Z = 1.959963984540054


def make_path(times, estimates, vcov, ref=-2, **kw):
    return CoefficientPath.from_estimates(times, estimates, vcov, ref, **kw)


def test_normal_quantiles_tabulated():
    assert normal_quantile(0.975) == pytest.approx(Z, abs=1e-12)
    assert normal_quantile(0.8) == pytest.approx(0.8416212335729143, abs=1e-12)
    assert normal_quantile(0.995) == pytest.approx(2.5758293035489004, abs=1e-12)
    assert normal_quantile(0.5) == 0.0


@pytest.mark.parametrize("se, expected", [(0.0179, 0.0503), (0.0160, 0.0448), (0.0126, 0.0352), (0.0184, 0.0515)])
def test_mde_table(se, expected):
    res = mde(se)
    assert res.mde == pytest.approx(expected, abs=5e-4)
    assert res.multiplier == pytest.approx(2.8016, abs=5e-4)
    assert res.mde == res.multiplier * res.se


def test_mde_half_power():
    assert mde(1.0, power=0.5).multiplier == pytest.approx(1.95996, abs=1e-5)


@given(st.floats(0, 10), st.floats(0.01, 100))
def test_mde_homogeneous(se, c):
    assert mde(c * se).mde == pytest.approx(c * mde(se).mde, rel=1e-12, abs=1e-15)


def test_average_single_and_pair():
    p = make_path([-3, 0, 1], [0.1, 0.4, 0.8], np.diag([0.01, 0.04, 0.04]))
    assert average_post_effect(p, [1]) == pytest.approx((0.8, 0.2))
    est, se = average_post_effect(p, [0, 1])
    assert est == pytest.approx(0.6)
    assert se == pytest.approx(0.2 / np.sqrt(2))
    with pytest.raises(MissingCoefficient):
        average_post_effect(p, [5])


def test_average_matches_reparameterized_regression():
    params = StructuralParams(lambda_H=0.5, xi=0.5, sd_eps=0.5, fe_unit_sd=1.0, fe_time_sd=0.3)
    panel, _ = simulate_panel(params, 400, (0, 15), seed=9, adoption_process=TimingProcess("fixed", periods=[5, 8, None]))
    spec = EventStudySpec(leads=3, lags=5, estimator="twfe")
    path = twfe_event_study(panel, spec, "adherence")
    window = [0, 1, 2, 3, 4]
    est, se = average_post_effect(path, window)

    d = twfe_design(panel, spec, "adherence")
    cols = [d.event_times.index(t) for t in window]
    X = d.X.copy()
    K = len(window)
    base = X[:, cols[0]].copy()
    X[:, cols[0]] = K * base
    for j in cols[1:]:
        X[:, j] = X[:, j] - base
    res = fe_ols(d.y, X, d.fe_groups, weights=d.weights, clusters=d.clusters, tol=1e-12)
    assert est == pytest.approx(res.coefficients[cols[0]], abs=1e-8)
    assert se == pytest.approx(res.ses[cols[0]], abs=1e-8)


TOY_TIMES = [-5, -4, -3, 0, 1]


def toy_path(pre, post, vcov):
    return make_path(TOY_TIMES, list(pre) + list(post), vcov)


def test_m_zero_is_conventional_interval(rng):
    for _ in range(5):
        A = rng.normal(size=(5, 5)) * 0.05
        p = toy_path(rng.normal(size=3) * 0.05, rng.normal(size=2), A @ A.T)
        est, se = average_post_effect(p)
        lo, hi = honest_rm_interval(p, 0.0)
        assert lo == pytest.approx(est - Z * se, abs=1e-12)
        assert hi == pytest.approx(est + Z * se, abs=1e-12)
        assert lo <= est <= hi


def test_flat_pre_period_ignores_m():
    V = np.zeros((5, 5))
    V[3:, 3:] = np.eye(2) * 0.01
    p = toy_path([0, 0, 0], [0.5, 0.7], V)
    intervals = sensitivity(p).intervals
    assert all(i == intervals[0] for i in intervals)


def grid_oracle(pre, post, M, l=(0.5, 0.5), step=0.0005):
    """Identified set by brute force over a lattice of post violation paths."""
    chain = list(pre) + [0.0]
    mbar = max(abs(b - a) for a, b in zip(chain[:-1], chain[1:]))
    s = M * mbar
    if s == 0:
        d0 = d1 = np.zeros(1)
    else:
        g = np.arange(-2 * s, 2 * s + step / 2, step)
        d0, d1 = np.meshgrid(g, g, indexing="ij")
    ok = (np.abs(d0) <= s + 1e-12) & (np.abs(d1 - d0) <= s + 1e-12)
    theta = l[0] * (post[0] - d0) + l[1] * (post[1] - d1)
    return theta[ok].min(), theta[ok].max()


@pytest.mark.parametrize(
    "pre, post",
    [
        ((0.03, -0.02, 0.05), (0.4, 0.6)),
        ((0.10, 0.10, 0.00), (-0.2, 0.3)),
        ((0.00, 0.02, 0.01), (1.0, 1.0)),
    ],
)
def test_bounds_match_grid_search(pre, post):
    p = toy_path(pre, post, np.eye(5) * 0.001)
    for M in M_GRID:
        b = rm_bounds(p, M)
        lo, hi = grid_oracle(pre, post, M)
        assert b.set_lo == pytest.approx(lo, abs=1e-4)
        assert b.set_hi == pytest.approx(hi, abs=1e-4)


def test_bound_gradient_is_numerical_derivative(rng):
    # set endpoints are piecewise linear in the estimates; perturbing every
    # estimate slightly must move them along the reported gradient
    pre, post = np.array([0.03, -0.02, 0.05]), np.array([0.4, 0.6])
    V = np.eye(5) * 0.001
    base = rm_bounds(toy_path(pre, post, V), 1.5)
    h = 1e-7
    for j in range(5):
        e = np.zeros(5)
        e[j] = h
        moved = rm_bounds(toy_path(pre + e[:3], post + e[3:], V), 1.5)
        assert (moved.set_lo - base.set_lo) / h == pytest.approx(base.grad_lo[j], abs=1e-5)
        assert (moved.set_hi - base.set_hi) / h == pytest.approx(base.grad_hi[j], abs=1e-5)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_intervals_nested_and_widening(seed):
    rng = np.random.default_rng(seed)
    times = [-6, -5, -4, -3, -1, 0, 1, 2, 3]
    k = len(times)
    A = rng.normal(size=(k, k)) * rng.uniform(0.01, 0.2)
    p = make_path(times, rng.normal(size=k) * 0.3, A @ A.T)
    res = sensitivity(p, (0.0, 0.25, 0.5, 1.0, 1.5, 2.0, 3.0))
    for (lo0, hi0), (lo1, hi1) in zip(res.intervals[:-1], res.intervals[1:]):
        assert lo1 <= lo0 + 1e-12 and hi0 <= hi1 + 1e-12
    est, _ = average_post_effect(p)
    assert res.intervals[0][0] <= est <= res.intervals[0][1]


def test_levels_measure():
    p = toy_path([0.03, -0.02, 0.05], [0.4, 0.6], np.eye(5) * 0.001)
    b = rm_bounds(p, 1.0, measure="levels")
    assert b.max_pre_step == pytest.approx(0.05)


def test_infeasible_inputs():
    p = make_path([-1, 0, 1], [0.0, 0.5, 0.6], np.eye(3) * 0.01)
    with pytest.raises(InfeasibleLP):
        honest_rm_interval(p, 1.0)
    bad = toy_path([0, 0, 0.1], [0.4, 0.6], np.full((5, 5), np.nan))
    with pytest.raises(InfeasibleLP):
        honest_rm_interval(bad, 1.0)


def test_sensitivity_table():
    p = toy_path([0.03, -0.02, 0.05], [0.4, 0.6], np.eye(5) * 0.01)
    t = sensitivity(p).table()
    assert list(t.columns) == ["M", "ci_lo", "ci_hi", "crosses_zero"]
    assert list(t["M"]) == list(M_GRID)
    assert t["crosses_zero"].dtype == bool
