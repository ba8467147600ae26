import numpy as np
import pytest

from eventpanel.censoring import censor_gap
from eventpanel.simulate import StructuralParams, TimingProcess, simulate_panel


def noiseless_panel(n_units=500, periods=(0, 23), cohorts=(6, 10, 14, None), censor=True, seed=0, **params):
    """Noiseless panel with fixed adoption cohorts and uniform shock dates."""
    base = dict(lambda_H=0.5, xi=1.0, fe_unit_sd=1.0, fe_time_sd=0.5)
    base.update(params)
    panel, truth = simulate_panel(
        StructuralParams(**base),
        n_units,
        periods,
        seed=seed,
        adoption_process=TimingProcess("fixed", periods=list(cohorts)),
    )
    if censor:
        _, panel = censor_gap(panel)
    return panel, truth


@pytest.fixture(scope="session")
def homogeneous():
    return noiseless_panel()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)
