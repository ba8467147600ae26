import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eventpanel.errors import DuplicateCell, MalformedRow, MissingColumn, NoAnchor, NonAbsorbingTreatment
from eventpanel.panel import (
    NEVER_TREATED,
    PanelDataset,
    Schema,
    assign_cohorts,
    event_time,
    format_period,
    load_panel,
    panel_schema,
    parse_period,
    write_panel,
)


def write(tmp_path, text, name="p.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


SCHEMA = Schema(outcomes=["y"])


def test_load_counts_cells(tmp_path):
    p = write(tmp_path, "unit,period,anchor,adoption,y\na,1,,,0.5\na,2,,,0.7\nb,1,,,1.0\n")
    panel = load_panel(p, SCHEMA)
    assert panel.n_cells == 3
    assert panel.n_units == 2
    assert panel.period_range == (1, 2)


def test_load_tab_delimited_and_comments(tmp_path):
    p = write(tmp_path, "# generated\nunit\tperiod\tanchor\tadoption\ty\na\t1\t1\t\t0.5\n")
    panel = load_panel(p, SCHEMA)
    assert panel.n_cells == 1
    assert panel.units.loc["a", "anchor"] == 1


def test_quarter_periods(tmp_path):
    p = write(tmp_path, "unit,period,anchor,adoption,y\na,2019Q4,2020Q1,,1\na,2020Q1,2020Q1,,2\n")
    panel = load_panel(p, SCHEMA)
    assert list(panel.periods) == [parse_period("2019Q4"), parse_period("2020Q1")]
    assert event_time(panel, "a", parse_period("2019Q4")) == -1


def test_duplicate_cell(tmp_path):
    p = write(tmp_path, "unit,period,anchor,adoption,y\na,1,,,0.5\na,1,,,0.7\n")
    with pytest.raises(DuplicateCell):
        load_panel(p, SCHEMA)


def test_missing_column(tmp_path):
    p = write(tmp_path, "unit,period,anchor,adoption\na,1,,\n")
    with pytest.raises(MissingColumn):
        load_panel(p, SCHEMA)


def test_malformed_row_names_line(tmp_path):
    p = write(tmp_path, "unit,period,anchor,adoption,y\na,1,,,0.5\na,x,,,0.7\n")
    with pytest.raises(MalformedRow, match="line 3"):
        load_panel(p, SCHEMA)


def test_treatment_must_be_absorbing(tmp_path):
    text = "unit,period,anchor,adoption,y,d\na,4,,5,0,0\na,5,,5,0,1\na,6,,5,0,0\n"
    p = write(tmp_path, text)
    with pytest.raises(NonAbsorbingTreatment):
        load_panel(p, Schema(outcomes=["y"], treatment="d"))


def test_adoption_must_be_unit_constant(tmp_path):
    p = write(tmp_path, "unit,period,anchor,adoption,y\na,5,,5,0\na,6,,,0\n")
    with pytest.raises(NonAbsorbingTreatment):
        load_panel(p, SCHEMA)


def test_event_time():
    units = pd.DataFrame({"anchor": [10, None]}, index=["a", "b"])
    cells = pd.DataFrame({"unit": ["a", "b"], "period": [7, 7], "y": [0.0, 0.0]})
    panel = PanelDataset(units, cells, ("y",))
    assert event_time(panel, "a", 10) == 0
    assert event_time(panel, "a", 7) == -3
    with pytest.raises(NoAnchor):
        event_time(panel, "b", 7)


def _units_panel(adoptions):
    ids = [f"u{i}" for i in range(len(adoptions))]
    units = pd.DataFrame({"adoption": adoptions}, index=ids)
    cells = pd.DataFrame({"unit": ids, "period": [0] * len(ids), "y": [0.0] * len(ids)})
    return PanelDataset(units, cells, ("y",))


def test_assign_cohorts():
    cohorts = assign_cohorts(_units_panel([5, 5, 9, None]))
    counts = pd.Series(cohorts).value_counts().to_dict()
    assert counts == {5: 2, 9: 1, NEVER_TREATED: 1}
    assert set(assign_cohorts(_units_panel([3, 3, 3])).values()) == {3}
    empty = PanelDataset(pd.DataFrame({"adoption": []}), pd.DataFrame({"unit": [], "period": [], "y": []}), ("y",))
    assert assign_cohorts(empty) == {}


def test_roundtrip(tmp_path, homogeneous):
    panel, _ = homogeneous
    p = tmp_path / "out.csv"
    write_panel(panel, p, header=["test"])
    again = load_panel(p, panel_schema(panel))
    assert again.n_cells == panel.n_cells
    cols = list(panel.outcomes)
    np.testing.assert_array_equal(again.cells[cols].to_numpy(), panel.cells[cols].to_numpy())
    assert again.units["adoption"].equals(panel.units["adoption"])
    write_panel(again, tmp_path / "out2.csv", header=["test"])
    assert (tmp_path / "out2.csv").read_bytes() == p.read_bytes()


@given(st.integers(min_value=1900 * 4, max_value=2100 * 4))
def test_period_roundtrip(period):
    assert parse_period(format_period(period)) == period
