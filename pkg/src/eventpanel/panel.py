"""Panel data model, delimited-file ingestion and event-time arithmetic."""

from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
import pandas as pd

from .errors import (
    DuplicateCell,
    MalformedRow,
    MissingColumn,
    NoAnchor,
    NonAbsorbingTreatment,
)

__all__ = [
    "NEVER_TREATED",
    "ANCHORS",
    "Schema",
    "PanelDataset",
    "parse_period",
    "format_period",
    "load_panel",
    "write_panel",
    "event_time",
    "assign_cohorts",
    "panel_schema",
]

#: Sentinel cohort for units that never receive the anchor event.
NEVER_TREATED = math.inf

#: Anchor name -> column of the unit table holding the anchor period.
ANCHORS = {"shock": "anchor", "adoption": "adoption"}

_QUARTER = re.compile(r"^\s*(\d{4})\s*[Qq]\s*([1-4])\s*$")


def parse_period(token: str) -> int:
    """Parse an integer period index, or a ``YYYYQn`` quarter label.

    Quarters are encoded as ``year * 4 + quarter - 1``.
    """
    m = _QUARTER.match(token)
    if m:
        return int(m.group(1)) * 4 + int(m.group(2)) - 1
    value = float(token)
    if not value.is_integer():
        raise ValueError(f"period {token!r} is not an integer")
    return int(value)


def format_period(period: int) -> str:
    year, q = divmod(int(period), 4)
    return f"{year}Q{q + 1}"


@dataclass
class Schema:
    """Maps panel roles onto the column names of a delimited file."""

    unit: str = "unit"
    period: str = "period"
    anchor: str | None = "anchor"
    adoption: str | None = "adoption"
    outcomes: Sequence[str] = ()
    covariates: Sequence[str] = ()
    labels: Mapping[str, str] = field(default_factory=dict)
    weight: str | None = None
    treatment: str | None = None

    def __post_init__(self):
        if not self.outcomes:
            raise ValueError("schema must name at least one outcome column")
        if isinstance(self.labels, (list, tuple)):
            self.labels = {name: name for name in self.labels}


@dataclass(frozen=True, eq=False)
class PanelDataset:
    """Rectangular unit x period panel.

    ``units`` is indexed by unit id (strings) and carries the ``anchor``
    (shock) and ``adoption`` periods as nullable integers plus static labels.
    ``cells`` holds one row per observed (unit, period), ordered by unit then
    period, with outcome and covariate columns, ``weight`` and ``censored``.

    Treat instances as immutable; use :meth:`replace_cells` to derive new ones.
    """

    units: pd.DataFrame
    cells: pd.DataFrame
    outcomes: tuple[str, ...]
    covariates: tuple[str, ...] = ()
    labels: tuple[str, ...] = ()
    period_range: tuple[int, int] | None = None

    def __post_init__(self):
        units = self.units.copy()
        units.index = units.index.astype(str)
        units.index.name = "unit"
        for col in ("anchor", "adoption"):
            if col not in units:
                units[col] = pd.array([pd.NA] * len(units), dtype="Int64")
            else:
                units[col] = units[col].astype("Int64")
        cells = self.cells.copy()
        cells["unit"] = cells["unit"].astype(str)
        cells["period"] = cells["period"].astype(np.int64)
        if "weight" not in cells:
            cells["weight"] = 1.0
        if "censored" not in cells:
            cells["censored"] = False
        cells["censored"] = cells["censored"].astype(bool)
        order = {u: i for i, u in enumerate(units.index)}
        unknown = set(cells["unit"]) - set(order)
        if unknown:
            raise ValueError(f"cells reference unknown units: {sorted(unknown)[:5]}")
        codes = cells["unit"].map(order).to_numpy()
        sort = np.lexsort((cells["period"].to_numpy(), codes))
        cells = cells.iloc[sort].reset_index(drop=True)
        cols = ["unit", "period", *self.outcomes, *self.covariates, "weight", "censored"]
        missing = [c for c in cols if c not in cells]
        if missing:
            raise MissingColumn(f"cells lack columns {missing}")
        cells = cells[cols]
        for c in (*self.outcomes, *self.covariates, "weight"):
            cells[c] = cells[c].astype(float)
        if (cells["weight"] < 0).any():
            raise ValueError("cell weights must be nonnegative")

        dup = cells.duplicated(["unit", "period"], keep=False)
        if dup.any():
            first = cells.loc[dup].iloc[0]
            raise DuplicateCell(f"more than one cell for ({first['unit']}, {first['period']})")
        periods = cells["period"].to_numpy()
        if self.period_range is None:
            pr = (int(periods.min()), int(periods.max())) if len(periods) else (0, 0)
        else:
            pr = (int(self.period_range[0]), int(self.period_range[1]))
            if len(periods) and (periods.min() < pr[0] or periods.max() > pr[1]):
                raise ValueError(f"cell periods fall outside period_range {pr}")
        object.__setattr__(self, "units", units)
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "outcomes", tuple(self.outcomes))
        object.__setattr__(self, "covariates", tuple(self.covariates))
        object.__setattr__(self, "labels", tuple(self.labels))
        object.__setattr__(self, "period_range", pr)

    @property
    def n_units(self) -> int:
        return len(self.units)

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @cached_property
    def unit_codes(self) -> np.ndarray:
        """Integer position of each cell's unit in ``units``."""
        order = pd.Index(self.units.index)
        return order.get_indexer(self.cells["unit"])

    @cached_property
    def periods(self) -> np.ndarray:
        return self.cells["period"].to_numpy()

    def anchor_periods(self, anchor: str = "shock") -> np.ndarray:
        """Per-unit anchor period as float, NaN when absent."""
        col = _anchor_column(anchor)
        return self.units[col].to_numpy(dtype=float, na_value=np.nan)

    def cell_anchor(self, anchor: str = "shock") -> np.ndarray:
        return self.anchor_periods(anchor)[self.unit_codes]

    def event_times(self, anchor: str = "shock") -> np.ndarray:
        """Vectorized event time per cell (NaN for units without the anchor)."""
        return self.periods - self.cell_anchor(anchor)

    def treatment(self, anchor: str = "adoption") -> np.ndarray:
        """Absorbing indicator ``period >= anchor`` per cell."""
        a = self.cell_anchor(anchor)
        with np.errstate(invalid="ignore"):
            return np.where(np.isnan(a), 0, self.periods >= a).astype(np.int8)

    def cell_label(self, name: str) -> np.ndarray:
        return self.units[name].to_numpy()[self.unit_codes]

    def kept(self) -> np.ndarray:
        return ~self.cells["censored"].to_numpy()

    def replace_cells(self, cells: pd.DataFrame) -> "PanelDataset":
        return replace(self, cells=cells)

    def equals(self, other: "PanelDataset") -> bool:
        return (
            self.outcomes == other.outcomes
            and self.covariates == other.covariates
            and self.labels == other.labels
            and self.period_range == other.period_range
            and self.units.equals(other.units)
            and self.cells.equals(other.cells)
        )


def _anchor_column(anchor: str) -> str:
    try:
        return ANCHORS[anchor]
    except KeyError:
        raise ValueError(f"anchor must be one of {sorted(ANCHORS)}, got {anchor!r}") from None


def event_time(panel: PanelDataset, unit_id, t: int, anchor: str = "shock") -> int:
    """Periods elapsed since ``unit_id``'s anchor date (negative before)."""
    value = panel.units.loc[str(unit_id), _anchor_column(anchor)]
    if pd.isna(value):
        raise NoAnchor(f"unit {unit_id} has no {anchor} date")
    return int(t) - int(value)


def assign_cohorts(panel: PanelDataset, anchor: str = "adoption") -> dict[str, float]:
    """Map each unit to its anchor period, or :data:`NEVER_TREATED`."""
    col = _anchor_column(anchor)
    out = {}
    for unit, value in panel.units[col].items():
        out[unit] = NEVER_TREATED if pd.isna(value) else int(value)
    return out


# ---------------------------------------------------------------------------
# delimited I/O


def _parse_float(token: str) -> float:
    return float(token) if token.strip() != "" else math.nan


def _parse_optional_period(token: str) -> int | None:
    token = token.strip()
    if token == "" or token.upper() in {"NA", "NAN", "."}:
        return None
    return parse_period(token)


def _label_value(name: str, token: str):
    token = token.strip()
    if token == "":
        return None
    if name.endswith("_id"):
        return token
    try:
        return float(token)
    except ValueError:
        return token


def load_panel(path: str | Path, schema: Schema) -> PanelDataset:
    """Read a comma- or tab-separated panel file into a validated dataset.

    Lines starting with ``#`` are treated as comments. Errors name the
    offending line number (1-based, counting every physical line).
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    numbered = [(i + 1, line) for i, line in enumerate(lines) if line.strip() and not line.startswith("#")]
    if not numbered:
        raise MalformedRow(f"{path}: no header row")
    header_no, header = numbered[0]
    delimiter = "\t" if "\t" in header else ","
    rows = csv.reader([line for _, line in numbered], delimiter=delimiter)
    columns = [c.strip() for c in next(rows)]
    position = {c: i for i, c in enumerate(columns)}

    required = [schema.unit, schema.period, *schema.outcomes, *schema.covariates, *schema.labels.values()]
    for opt in (schema.anchor, schema.adoption, schema.weight, schema.treatment):
        if opt is not None:
            required.append(opt)
    for col in required:
        if col not in position:
            raise MissingColumn(f"{path}: column {col!r} not found in header (line {header_no})")

    unit_rows: dict[str, dict] = {}
    unit_first_line: dict[str, int] = {}
    seen: dict[tuple[str, int], int] = {}
    records = []
    treat_obs: dict[str, list[tuple[int, int, int]]] = {}
    for (line_no, _), row in zip(numbered[1:], rows):
        if len(row) != len(columns):
            raise MalformedRow(f"{path}: line {line_no} has {len(row)} fields, expected {len(columns)}")
        unit = row[position[schema.unit]].strip()
        if unit == "":
            raise MalformedRow(f"{path}: line {line_no} has an empty unit id")
        try:
            period = parse_period(row[position[schema.period]])
        except ValueError:
            raise MalformedRow(
                f"{path}: line {line_no} has unparseable period {row[position[schema.period]]!r}"
            ) from None
        key = (unit, period)
        if key in seen:
            raise DuplicateCell(f"{path}: lines {seen[key]} and {line_no} both hold cell {key}")
        seen[key] = line_no

        attrs = {}
        try:
            attrs["anchor"] = _parse_optional_period(row[position[schema.anchor]]) if schema.anchor else None
            attrs["adoption"] = (
                _parse_optional_period(row[position[schema.adoption]]) if schema.adoption else None
            )
        except ValueError:
            raise MalformedRow(f"{path}: line {line_no} has an unparseable anchor/adoption period") from None
        for role, col in schema.labels.items():
            attrs[role] = _label_value(role, row[position[col]])

        if unit not in unit_rows:
            unit_rows[unit] = attrs
            unit_first_line[unit] = line_no
        else:
            prev = unit_rows[unit]
            if prev["adoption"] != attrs["adoption"]:
                raise NonAbsorbingTreatment(
                    f"{path}: line {line_no}: unit {unit} adoption changes from "
                    f"{prev['adoption']} to {attrs['adoption']}; treatment must be absorbing"
                )
            for k, v in attrs.items():
                if not _same(prev[k], v):
                    raise MalformedRow(
                        f"{path}: line {line_no}: unit {unit} {k} {v!r} conflicts with "
                        f"{prev[k]!r} on line {unit_first_line[unit]}"
                    )

        rec = {"unit": unit, "period": period}
        try:
            for col in (*schema.outcomes, *schema.covariates):
                rec[col] = _parse_float(row[position[col]])
            rec["weight"] = _parse_float(row[position[schema.weight]]) if schema.weight else 1.0
        except ValueError:
            raise MalformedRow(f"{path}: line {line_no} has a non-numeric value") from None
        if schema.treatment:
            try:
                d = int(float(row[position[schema.treatment]]))
            except ValueError:
                raise MalformedRow(f"{path}: line {line_no} has an unparseable treatment value") from None
            treat_obs.setdefault(unit, []).append((period, d, line_no))
        records.append(rec)

    for unit, obs in treat_obs.items():
        obs.sort()
        adoption = unit_rows[unit]["adoption"]
        prev_d = 0
        for period, d, line_no in obs:
            implied = int(adoption is not None and period >= adoption)
            if d < prev_d or d != implied:
                raise NonAbsorbingTreatment(
                    f"{path}: line {line_no}: unit {unit} treatment {d} at period {period} "
                    f"is inconsistent with absorbing adoption at {adoption}"
                )
            prev_d = d

    labels = tuple(schema.labels)
    units = pd.DataFrame.from_dict(unit_rows, orient="index")
    if units.empty:
        units = pd.DataFrame(columns=["anchor", "adoption", *labels])
    for role in labels:
        units[role] = _label_series(units[role], role)
    cells = pd.DataFrame.from_records(
        records, columns=["unit", "period", *schema.outcomes, *schema.covariates, "weight"]
    )
    return PanelDataset(
        units=units,
        cells=cells,
        outcomes=tuple(schema.outcomes),
        covariates=tuple(schema.covariates),
        labels=labels,
    )


def _same(a, b) -> bool:
    if a is None or b is None:
        return a is None and b is None
    return a == b


def _label_series(values: pd.Series, role: str) -> pd.Series:
    if role.endswith("_id") or any(isinstance(v, str) for v in values if v is not None):
        return values.astype(object).where(values.notna(), None)
    return values.astype(float)


def _fmt(value) -> str:
    if value is None or value is pd.NA:
        return ""
    if isinstance(value, (float, np.floating)):
        if math.isnan(value):
            return ""
        return repr(float(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


def panel_schema(panel: PanelDataset) -> Schema:
    """Schema matching the column layout :func:`write_panel` emits."""
    weight = "weight" if (panel.cells["weight"] != 1.0).any() else None
    return Schema(
        outcomes=panel.outcomes,
        covariates=panel.covariates,
        labels={name: name for name in panel.labels},
        weight=weight,
    )


def write_panel(panel: PanelDataset, path: str | Path, header: Iterable[str] = (), delimiter: str = ",") -> None:
    """Write ``panel`` in the fixed column order
    unit, period, anchor, adoption, outcomes..., covariates..., labels... [, weight].
    """
    schema = panel_schema(panel)
    columns = ["unit", "period", "anchor", "adoption", *panel.outcomes, *panel.covariates, *panel.labels]
    if schema.weight:
        columns.append("weight")
    units = panel.units
    unit_attrs = {
        u: [_fmt(units.at[u, "anchor"]), _fmt(units.at[u, "adoption"])] + [_fmt(units.at[u, lab]) for lab in panel.labels]
        for u in units.index
    }
    values = panel.cells[[*panel.outcomes, *panel.covariates]].to_numpy()
    weights = panel.cells["weight"].to_numpy()
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        for line in header:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
        writer.writerow(columns)
        for i, (unit, period) in enumerate(zip(panel.cells["unit"], panel.cells["period"])):
            attrs = unit_attrs[unit]
            row = [unit, str(int(period)), attrs[0], attrs[1]]
            row += [_fmt(v) for v in values[i]]
            row += attrs[2:]
            if schema.weight:
                row.append(_fmt(weights[i]))
            writer.writerow(row)
