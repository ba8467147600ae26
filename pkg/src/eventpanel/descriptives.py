"""Descriptive diagnostics: event-time trajectories, leave-one-out provider
leniency, baseline balance and per-district intake counts."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy.special import ndtri

from .errors import EmptyGroup
from .estimators.core import kept_mask
from .panel import PanelDataset

__all__ = [
    "TrajectorySeries",
    "LeniencyTable",
    "moving_average_trajectory",
    "loo_leniency",
    "balance_table",
    "district_intake",
]


@dataclass(frozen=True)
class TrajectorySeries:
    """Smoothed event-time means of one group with pointwise normal bands.

    ``raw`` holds the unsmoothed per-tau means; ``n`` the raw cell counts.
    """

    group: str
    tau: np.ndarray
    mean: np.ndarray
    ci_lo: np.ndarray
    ci_hi: np.ndarray
    n: np.ndarray
    raw: np.ndarray
    span: int

    def frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "group": self.group,
                "tau": self.tau,
                "mean": self.mean,
                "lo": self.ci_lo,
                "hi": self.ci_hi,
                "n": self.n,
            }
        )


def _groups(panel: PanelDataset, group_by: str | None) -> np.ndarray:
    """Per-unit group labels."""
    if group_by is None:
        return np.full(panel.n_units, "all", dtype=object)
    if group_by == "treated":
        adopted = panel.units["adoption"].notna().to_numpy()
        return np.where(adopted, "treated", "control").astype(object)
    if group_by not in panel.units.columns:
        raise ValueError(f"unknown grouping {group_by!r}")
    return np.array([str(v) for v in panel.units[group_by]], dtype=object)


def _smooth(tau: np.ndarray, mean: np.ndarray, se: np.ndarray, span: int):
    """Centered moving average within the pre (tau < 0) and post (tau >= 0) regimes."""
    h = span // 2
    out_m = np.empty_like(mean)
    out_se = np.empty_like(se)
    post = tau >= 0
    for i, t in enumerate(tau):
        sel = (np.abs(tau - t) <= h) & (post == post[i])
        k = sel.sum()
        out_m[i] = mean[sel].mean()
        out_se[i] = np.sqrt(np.sum(se[sel] ** 2)) / k
    return out_m, out_se


def moving_average_trajectory(
    panel: PanelDataset,
    outcome: str,
    anchor: str = "shock",
    window: int = 12,
    span: int = 3,
    group_by: str | None = "treated",
    mask=None,
    confidence: float = 0.95,
) -> list[TrajectorySeries]:
    """Moving-average trajectories of ``outcome`` around the anchor.

    Raw means over kept cells at each event time in ``[-window, window]``
    are smoothed with a centered moving average of ``span`` event times.
    Pre-anchor (``tau <= -1``) and post-anchor (``tau >= 0``) points never
    share data. Bands are ``mean +/- z * se`` with ``se = sd / sqrt(n)`` per
    event time, propagated through the average as ``sqrt(sum se^2) / k``.

    Parameters
    ----------
    group_by : str or None
        ``"treated"`` splits adopters from never-adopters; any static label
        name gives one series per value; None pools all units.
    """
    if outcome not in panel.cells.columns:
        raise ValueError(f"unknown outcome {outcome!r}")
    if window < 1:
        raise ValueError("window must be >= 1")
    if span < 1 or span % 2 == 0:
        raise ValueError("span must be a positive odd integer")
    z = float(ndtri(0.5 + confidence / 2))
    keep = kept_mask(panel, mask)
    tau = panel.event_times(anchor)
    y = panel.cells[outcome].to_numpy(dtype=float)
    use = keep & np.isfinite(tau) & np.isfinite(y) & (np.abs(tau) <= window)
    cell_group = _groups(panel, group_by)[panel.unit_codes]
    frame = pd.DataFrame({"group": cell_group[use], "tau": tau[use].astype(int), "y": y[use]})

    names = sorted(set(_groups(panel, group_by)))
    series = []
    for name in names:
        sub = frame[frame["group"] == name]
        if sub.empty:
            raise EmptyGroup(f"group {name!r} has no kept cells within {window} periods of the {anchor} date")
        agg = sub.groupby("tau")["y"].agg(["mean", "std", "count"]).sort_index()
        t = agg.index.to_numpy()
        n = agg["count"].to_numpy()
        sd = agg["std"].fillna(0.0).to_numpy()
        raw = agg["mean"].to_numpy()
        se = sd / np.sqrt(n)
        m, s = _smooth(t, raw, se, span)
        series.append(TrajectorySeries(name, t, m, m - z * s, m + z * s, n, raw, span))
    return series


# ---------------------------------------------------------------------------
# leave-one-out leniency


@dataclass(frozen=True)
class LeniencyTable:
    """Per-unit leave-one-out rates and the arm comparison summary.

    ``units`` has columns ``unit, provider, d, n_g, loo_rate`` (``loo_rate``
    NaN for single-patient providers). ``summary`` has one row per panel
    (all providers, then providers with ``n_g >= threshold``).
    """

    units: pd.DataFrame
    summary: pd.DataFrame
    threshold: int


def _two_sample(x_c: np.ndarray, x_t: np.ndarray) -> dict:
    n_c, n_t = len(x_c), len(x_t)
    m_c = float(x_c.mean()) if n_c else np.nan
    m_t = float(x_t.mean()) if n_t else np.nan
    s_c = float(x_c.std(ddof=1)) if n_c > 1 else np.nan
    s_t = float(x_t.std(ddof=1)) if n_t > 1 else np.nan
    t = np.nan
    if n_c > 1 and n_t > 1:
        diff = m_t - m_c
        pooled = ((n_c - 1) * s_c**2 + (n_t - 1) * s_t**2) / (n_c + n_t - 2)
        scale = np.sqrt(pooled * (1 / n_c + 1 / n_t))
        t = float(diff / scale) if scale > 0 else (0.0 if diff == 0 else float(np.sign(diff) * np.inf))
    return {"n_c": n_c, "mean_c": m_c, "sd_c": s_c, "n_t": n_t, "mean_t": m_t, "sd_t": s_t, "diff": m_t - m_c, "t": t}


def _unit_treatment(panel: PanelDataset, treatment) -> np.ndarray:
    if treatment is None or treatment == "adopted":
        return panel.units["adoption"].notna().to_numpy().astype(int)
    if isinstance(treatment, str):
        return panel.units[treatment].to_numpy().astype(int)
    d = np.asarray(treatment).astype(int)
    if d.shape != (panel.n_units,):
        raise ValueError("treatment must have one entry per unit")
    return d


def loo_leniency(
    data: PanelDataset | pd.DataFrame,
    provider: str = "provider_id",
    treatment=None,
    threshold: int = 10,
) -> LeniencyTable:
    """Leave-one-out provider enrollment rate for every unit.

    ``L_i = (sum_{j in g} D_j - D_i) / (n_g - 1)``; absent when ``n_g = 1``.

    ``data`` is a panel (one row per unit taken from its unit table, with
    ``treatment`` defaulting to "ever adopted") or a unit-level DataFrame with
    a provider column and a 0/1 ``treatment`` column.
    """
    if isinstance(data, PanelDataset):
        if provider not in data.units.columns and f"{provider}_id" in data.units.columns:
            provider = f"{provider}_id"
        ids = data.units.index.to_numpy()
        prov = data.units[provider].to_numpy()
        d = _unit_treatment(data, treatment)
    else:
        ids = data.index.to_numpy()
        prov = data[provider].to_numpy()
        d = data[treatment].to_numpy().astype(int)
    frame = pd.DataFrame({"unit": ids, "provider": prov, "d": d})
    grp = frame.groupby("provider", sort=False)["d"]
    n_g = grp.transform("size").to_numpy()
    total = grp.transform("sum").to_numpy()
    with np.errstate(invalid="ignore", divide="ignore"):
        loo = np.where(n_g > 1, (total - d) / (n_g - 1), np.nan)
    frame["n_g"] = n_g
    frame["loo_rate"] = loo

    rows = []
    for name, sel in (("all", n_g > 0), (f"n_g>={threshold}", n_g >= threshold)):
        scored = sel & ~np.isnan(loo)
        row = _two_sample(loo[scored & (d == 0)], loo[scored & (d == 1)])
        rows.append({"panel": name, **row})
    return LeniencyTable(frame, pd.DataFrame(rows), threshold)


# ---------------------------------------------------------------------------
# balance


def _smd(x_c: np.ndarray, x_t: np.ndarray) -> float:
    diff = x_t.mean() - x_c.mean()
    pooled = np.sqrt((x_c.var(ddof=1) + x_t.var(ddof=1)) / 2.0)
    if pooled == 0:
        return 0.0 if diff == 0 else float(np.sign(diff) * np.inf)
    return float(diff / pooled)


def _baseline_frame(panel: PanelDataset, variables, anchor: str, baseline_tau: int | None, mask) -> pd.DataFrame:
    """One row per unit with static labels and cell variables at the baseline event time."""
    out = pd.DataFrame(index=panel.units.index)
    cell_vars = [v for v in variables if v not in panel.units.columns]
    for v in variables:
        if v in panel.units.columns:
            out[v] = pd.to_numeric(panel.units[v], errors="coerce")
    if cell_vars:
        if baseline_tau is None:
            raise ValueError(f"cell variables {cell_vars} need a baseline event time")
        tau = panel.event_times(anchor)
        sel = kept_mask(panel, mask) & (tau == baseline_tau)
        base = panel.cells.loc[sel, ["unit", *cell_vars]].set_index("unit")
        out = out.join(base, how="left")
    return out


def balance_table(
    data: PanelDataset | pd.DataFrame,
    variables,
    treatment=None,
    anchor: str = "shock",
    baseline_tau: int | None = -1,
    mask=None,
) -> pd.DataFrame:
    """Baseline balance by treatment arm.

    Columns ``variable, n_c, mean_c, n_t, mean_t, diff, t, smd``; ``diff`` is
    treated minus control, ``t`` the equal-variance two-sample statistic and
    ``smd = diff / sqrt((s_c^2 + s_t^2) / 2)`` (0 when both the numerator and
    the pooled SD are 0).

    For a panel, static labels come from the unit table and cell variables
    from each unit's kept cell at ``baseline_tau`` (relative to ``anchor``).
    """
    variables = list(variables)
    if isinstance(data, PanelDataset):
        frame = _baseline_frame(data, variables, anchor, baseline_tau, mask)
        d = _unit_treatment(data, treatment)
    else:
        missing = [v for v in variables if v not in data.columns]
        if missing:
            raise ValueError(f"unknown variables {missing}")
        frame = data
        d = data[treatment].to_numpy().astype(int)
    rows = []
    for v in variables:
        x = frame[v].to_numpy(dtype=float)
        ok = np.isfinite(x)
        x_c, x_t = x[ok & (d == 0)], x[ok & (d == 1)]
        row = _two_sample(x_c, x_t)
        smd = _smd(x_c, x_t) if len(x_c) > 1 and len(x_t) > 1 else np.nan
        rows.append(
            {
                "variable": v,
                "n_c": row["n_c"],
                "mean_c": row["mean_c"],
                "n_t": row["n_t"],
                "mean_t": row["mean_t"],
                "diff": row["diff"],
                "t": row["t"],
                "smd": smd,
            }
        )
    return pd.DataFrame(rows)


def district_intake(panel: PanelDataset, district: str = "district_id", anchor: str = "adoption") -> pd.DataFrame:
    """New anchor events per district and period over the full period range."""
    if district not in panel.units.columns and f"{district}_id" in panel.units.columns:
        district = f"{district}_id"
    dates = panel.anchor_periods(anchor)
    labels = panel.units[district].astype(str).to_numpy()
    t0, t1 = panel.period_range
    districts = sorted(set(labels))
    grid = pd.MultiIndex.from_product([districts, range(t0, t1 + 1)], names=["district", "period"])
    has = np.isfinite(dates)
    counts = pd.Series(1, index=pd.MultiIndex.from_arrays([labels[has], dates[has].astype(int)])).groupby(level=[0, 1]).sum()
    out = counts.reindex(grid, fill_value=0).rename("new_adoptions").reset_index()
    return out
