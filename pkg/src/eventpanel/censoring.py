"""Transition-gap censoring between the shock date and program adoption.

A cell is kept iff ``t < min(T_H, T_E)`` or ``t >= max(T_H, T_E)``; units
missing either date are never censored. The rule depends on dates only, so
outcomes in dropped cells can never influence an estimate.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np
import pandas as pd

from .panel import PanelDataset

__all__ = ["CensorMask", "keep_rule", "censor_gap", "gap_report", "gap_histogram", "write_gap_report"]


@dataclass(frozen=True)
class CensorMask:
    """Per-cell keep flags aligned with ``panel.cells`` order."""

    keep: np.ndarray
    units: np.ndarray
    periods: np.ndarray

    def as_dict(self) -> dict[tuple[str, int], bool]:
        return {(u, int(t)): bool(k) for u, t, k in zip(self.units, self.periods, self.keep)}

    @property
    def n_dropped(self) -> int:
        return int((~self.keep).sum())


def keep_rule(t, shock, adoption):
    """Vectorized keep indicator; NaN dates mean "absent"."""
    t = np.asarray(t, dtype=float)
    shock = np.asarray(shock, dtype=float)
    adoption = np.asarray(adoption, dtype=float)
    lo = np.fmin(shock, adoption)
    hi = np.fmax(shock, adoption)
    both = ~np.isnan(shock) & ~np.isnan(adoption)
    with np.errstate(invalid="ignore"):
        inside = (t >= lo) & (t < hi)
    return ~(both & inside)


def censor_gap(panel: PanelDataset) -> tuple[CensorMask, PanelDataset]:
    """Compute the keep mask and return it with a panel whose ``censored`` flags are set."""
    keep = keep_rule(panel.periods, panel.cell_anchor("shock"), panel.cell_anchor("adoption"))
    cells = panel.cells.copy()
    cells["censored"] = ~keep
    mask = CensorMask(keep=keep, units=panel.cells["unit"].to_numpy(), periods=panel.periods.copy())
    return mask, panel.replace_cells(cells)


def gap_report(panel: PanelDataset) -> pd.DataFrame:
    """One row per unit with a nonempty gap: unit_id, T_H, T_E, dropped_from, dropped_to."""
    units = panel.units
    shock = units["anchor"]
    adoption = units["adoption"]
    both = shock.notna() & adoption.notna() & (shock != adoption)
    sel = units.loc[both]
    lo = np.minimum(sel["anchor"].astype(int), sel["adoption"].astype(int))
    hi = np.maximum(sel["anchor"].astype(int), sel["adoption"].astype(int))
    return pd.DataFrame(
        {
            "unit_id": sel.index,
            "T_H": sel["anchor"].astype(int).to_numpy(),
            "T_E": sel["adoption"].astype(int).to_numpy(),
            "dropped_from": lo.to_numpy(),
            "dropped_to": (hi - 1).to_numpy(),
        }
    )


def gap_histogram(panel: PanelDataset) -> dict[int, int]:
    """Number of units by gap length ``|T_E - T_H|`` (units with both dates)."""
    report = gap_report(panel)
    lengths = (report["dropped_to"] - report["dropped_from"] + 1).to_numpy()
    values, counts = np.unique(lengths, return_counts=True)
    return {int(v): int(c) for v, c in zip(values, counts)}


def write_gap_report(panel: PanelDataset, path: str | Path, header: Iterable[str] = ()) -> None:
    report = gap_report(panel)
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        for line in header:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(report.columns))
        for row in report.itertuples(index=False):
            w.writerow(list(row))
