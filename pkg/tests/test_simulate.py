import numpy as np
import pytest

from eventpanel.errors import InvalidAdoptionProcess, UnstablePersistence
from eventpanel.simulate import (
    StructuralParams,
    TimingProcess,
    cell_truth,
    health_path,
    simulate_panel,
    true_event_coefficients,
    write_truth,
)


def test_health_path_closed_form():
    assert health_path(StructuralParams(lambda_H=0.5, xi=1.0), 2) == pytest.approx(1.5, abs=1e-15)
    assert health_path(StructuralParams(lambda_H=0.7, xi=0.3), -4) == 0.0


def test_health_path_matches_recursion():
    lam, xi = 0.9, 0.2
    h = 0.0
    for _ in range(40):
        h = lam * h + xi
    assert health_path(StructuralParams(lambda_H=lam, xi=xi), 40) == pytest.approx(h, abs=1e-6)


def test_unstable_persistence():
    with pytest.raises(UnstablePersistence):
        health_path(StructuralParams(lambda_H=1.0), 3)
    with pytest.raises(UnstablePersistence):
        simulate_panel(StructuralParams(lambda_by_cohort={5: -1.2}), 5, (0, 5), seed=1)


def test_invalid_adoption_process():
    with pytest.raises(InvalidAdoptionProcess):
        simulate_panel(StructuralParams(), 5, (0, 5), seed=1, adoption_process=TimingProcess("geometric", hazard=0))


def test_truth_examples():
    step = true_event_coefficients(StructuralParams(lambda_H=0.0, xi=1.0, loadings={"m": (1.0, 0.0)}), 6)
    assert step.beta("m", 0) == 0.0
    assert all(step.beta("m", k) == 1.0 for k in range(1, 7))
    er = true_event_coefficients(StructuralParams(pi_1=0.0, pi_2=0.05), 5)
    assert all(er.beta("er", k) == pytest.approx(-0.05) for k in range(6))
    t = true_event_coefficients(StructuralParams(lambda_H=0.5, xi=1.0, loadings={"m": (0.1, 0.02)}), 4)
    assert t.beta("m", 2) == pytest.approx(0.17, abs=1e-12)
    assert t.beta("m", -3) == 0.0
    assert t.limits["m"] == pytest.approx(0.02 + 0.1 * 2.0)


def test_same_seed_identical_files(tmp_path):
    from eventpanel.panel import write_panel

    for name in ("a", "b"):
        panel, truth = simulate_panel(
            StructuralParams(sd_u=0.1, sd_eps=0.2, fe_unit_sd=1.0), 1000, (0, 11), seed=7,
            adoption_process=TimingProcess("geometric", hazard=0.1, never_prob=0.3),
        )
        write_panel(panel, tmp_path / f"{name}.csv")
        write_truth(truth, tmp_path / f"{name}_truth.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert (tmp_path / "a_truth.csv").read_bytes() == (tmp_path / "b_truth.csv").read_bytes()


def test_different_seed_differs():
    kw = dict(params=StructuralParams(sd_eps=1.0), n_units=20, periods=(0, 5))
    a, _ = simulate_panel(seed=1, **kw)
    b, _ = simulate_panel(seed=2, **kw)
    assert not np.array_equal(a.cells["adherence"], b.cells["adherence"])


def test_noiseless_treated_minus_control_equals_truth():
    params = StructuralParams(lambda_H=0.6, xi=0.4)
    panel, truth = simulate_panel(params, 40, (0, 15), seed=3, adoption_process=TimingProcess("fixed", periods=[5, None]))
    for m in panel.outcomes:
        y = panel.cells.pivot(index="unit", columns="period", values=m).to_numpy()
        treated = panel.units["adoption"].notna().to_numpy()
        gap = y[treated].mean(axis=0) - y[~treated].mean(axis=0)
        for k in range(-5, 11):
            assert gap[5 + k] == pytest.approx(truth.beta(m, k), abs=1e-12)


def test_no_treatment_channel_is_flat():
    params = StructuralParams(xi=0.0, alpha_N=0.0, pi_2=0.0, loadings={"m": (1.0, 0.0)}, fe_unit_sd=1.0, fe_time_sd=1.0)
    panel, _ = simulate_panel(params, 30, (0, 9), seed=4, adoption_process=TimingProcess("uniform"))
    for m in panel.outcomes:
        y = panel.cells.pivot(index="unit", columns="period", values=m).to_numpy()
        # two-way additive: every unit's path is a shifted copy of the period effects
        centered = y - y[:, :1]
        np.testing.assert_allclose(centered, np.broadcast_to(centered[0], centered.shape), atol=1e-12)


def test_per_cohort_truth():
    params = StructuralParams(lambda_H=0.5, xi=1.0, xi_by_cohort={4: 2.0}, loadings={"m": (1.0, 0.0)})
    panel, truth = simulate_panel(params, 30, (0, 9), seed=5, adoption_process=TimingProcess("fixed", periods=[4, 6, None]))
    assert truth.beta("m", 2, cohort=4) == pytest.approx(3.0)
    assert truth.beta("m", 2, cohort=6) == pytest.approx(1.5)
    assert truth.average("m", 2) == pytest.approx(2.25)
    ct = cell_truth(truth, panel, "m")
    tau = panel.event_times("adoption")
    cohort = panel.cell_anchor("adoption")
    assert np.all(ct[(cohort == 4) & (tau == 2)] == pytest.approx(3.0))
    assert np.all(ct[np.isnan(tau) | (tau < 0)] == 0)


def test_binary_mode():
    panel, _ = simulate_panel(StructuralParams(sd_eps=1.0, binary_cut=0.0), 50, (0, 5), seed=6)
    vals = np.unique(panel.cells["adherence"])
    assert set(vals.tolist()) <= {0.0, 1.0}
