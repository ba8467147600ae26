import numpy as np
import pandas as pd
from hypothesis import given
from hypothesis import strategies as st

from eventpanel.censoring import censor_gap, gap_histogram, gap_report, keep_rule
from eventpanel.panel import PanelDataset


def dropped(shock, adoption, periods=range(0, 12)):
    t = np.array(list(periods))
    keep = keep_rule(t, np.full(len(t), shock, dtype=float), np.full(len(t), adoption, dtype=float))
    return set(t[~keep].tolist())


def test_shock_before_adoption():
    assert dropped(4, 7) == {4, 5, 6}


def test_adoption_before_shock():
    assert dropped(6, 3) == {3, 4, 5}


def test_same_period():
    assert dropped(5, 5) == set()


def test_missing_date_keeps_everything():
    assert dropped(np.nan, 5) == set()
    assert dropped(5, np.nan) == set()


@given(st.integers(0, 11), st.integers(0, 11))
def test_gap_length(h, e):
    assert len(dropped(h, e)) == abs(h - e)


def test_censor_gap_flags_and_report():
    units = pd.DataFrame({"anchor": [4, 6, None], "adoption": [7, 3, 2]}, index=["a", "b", "c"])
    cells = pd.DataFrame(
        {"unit": np.repeat(["a", "b", "c"], 10), "period": np.tile(np.arange(10), 3), "y": np.zeros(30)}
    )
    panel = PanelDataset(units, cells, ("y",))
    mask, flagged = censor_gap(panel)
    assert mask.n_dropped == 6
    assert flagged.cells["censored"].sum() == 6
    assert mask.as_dict()[("a", 5)] is False
    report = gap_report(panel)
    assert report.to_dict("list") == {
        "unit_id": ["a", "b"],
        "T_H": [4, 6],
        "T_E": [7, 3],
        "dropped_from": [4, 3],
        "dropped_to": [6, 5],
    }
    assert gap_histogram(panel) == {3: 2}
