"""Group-time average treatment effects and their event-time aggregation.

For cohort ``g`` and period ``t`` the effect is the difference between the
mean change ``Y_t - Y_base`` of cohort ``g`` and that of the control units,
with a universal base period ``base = g + base_offset`` (``g - 2`` by
default, matching the event-study normalization). Standard errors come from
per-unit influence functions, summed within clusters.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from ..errors import EmptyEventTime, NoControlObservations, PropensityOverlap
from ..fe import factorize
from ..panel import PanelDataset
from .core import CoefficientPath, EventStudySpec, dimension_labels, kept_mask

__all__ = ["GroupTimeATT", "callaway_santanna", "aggregate_event_time"]

OVERLAP_EPS = 0.005


@dataclass(frozen=True)
class GroupTimeATT:
    """ATT(g, t) grid.

    ``cells`` has one row per estimated (g, t) with columns
    ``cohort, period, event_time, att, se, n_treated, n_control``.
    ``influence`` is (clusters x cells): column sums of squares and cross
    products give the grid covariance.
    """

    cells: pd.DataFrame
    influence: np.ndarray
    cohort_sizes: dict
    base_offset: int
    control_group: str
    outcome: str = ""
    ipw: bool = False

    @property
    def vcov(self) -> np.ndarray:
        return self.influence.T @ self.influence

    def att(self, g, t) -> float:
        sel = (self.cells["cohort"] == g) & (self.cells["period"] == t)
        if not sel.any():
            raise KeyError((g, t))
        return float(self.cells.loc[sel, "att"].iloc[0])


def _wide(panel: PanelDataset, values: np.ndarray, keep: np.ndarray) -> np.ndarray:
    t0, t1 = panel.period_range
    Y = np.full((panel.n_units, t1 - t0 + 1), np.nan)
    Y[panel.unit_codes[keep], panel.periods[keep] - t0] = values[keep]
    return Y


def _unit_covariates(panel: PanelDataset, names, base_col: np.ndarray, keep) -> np.ndarray:
    """Covariates per unit: static labels as is, cell covariates at the base period."""
    cols = []
    for name in names:
        if name in panel.units.columns:
            cols.append(panel.units[name].to_numpy(dtype=float))
        else:
            W = _wide(panel, panel.cells[name].to_numpy(dtype=float), keep)
            cols.append(W[np.arange(panel.n_units), base_col])
    return np.column_stack(cols)


def _logit(D: np.ndarray, Z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    import statsmodels.api as sm

    fit = sm.Logit(D, Z).fit(disp=0, method="newton", maxiter=100)
    return fit.predict(Z), np.asarray(fit.cov_params())


def _cell_influence(dY, D, Z=None):
    """ATT and per-unit influence (already divided by n) for one (g, t) cell.

    Without covariates this is a plain difference in mean changes. With
    ``Z`` the controls are reweighted by normalized odds ``p/(1-p)`` and the
    influence includes the logit estimation effect.
    """
    n = len(D)
    if Z is None:
        treat, cont = D == 1, D == 0
        m1, m0 = dY[treat].mean(), dY[cont].mean()
        psi = np.where(treat, (dY - m1) / treat.sum(), -(dY - m0) / cont.sum())
        return m1 - m0, psi
    ps, cov_ps = _logit(D, Z)
    bad = (ps < OVERLAP_EPS) | (ps > 1 - OVERLAP_EPS)
    if bad.any():
        raise PropensityOverlap(float(bad.mean()), OVERLAP_EPS)
    w_t = D.astype(float)
    w_c = ps * (1 - D) / (1 - ps)
    eta_t = (w_t * dY).mean() / w_t.mean()
    eta_c = (w_c * dY).mean() / w_c.mean()
    score = (D - ps)[:, None] * Z
    hessian_inv = cov_ps * n
    lin_ps = score @ hessian_inv
    inf_t = (w_t * dY - w_t * eta_t) / w_t.mean()
    inf_c1 = w_c * dY - w_c * eta_c
    m2 = ((w_c * (dY - eta_c))[:, None] * Z).mean(axis=0)
    inf_c = (inf_c1 + lin_ps @ m2) / w_c.mean()
    return eta_t - eta_c, (inf_t - inf_c) / n


def callaway_santanna(
    panel: PanelDataset,
    spec: EventStudySpec,
    outcome: str,
    mask=None,
    ipw: tuple[str, ...] | None = None,
) -> GroupTimeATT:
    """ATT(g, t) for every treated cohort and every period other than its base.

    ``spec.control_group`` is ``never_treated`` or ``not_yet_treated`` (units
    untreated at both ``t`` and the base period, never-treated included).
    Units lacking a kept cell at ``t`` or the base drop out of that cell.
    With ``ipw`` (covariate or label names), controls are reweighted by the
    Hajek-normalized propensity odds from a logit of cohort membership.
    """
    if spec.control_group not in ("never_treated", "not_yet_treated"):
        raise ValueError("group-time ATTs support never_treated or not_yet_treated controls")
    keep = kept_mask(panel, mask)
    t0, t1 = panel.period_range
    Y = _wide(panel, panel.cells[outcome].to_numpy(dtype=float), keep)
    anchors = panel.anchor_periods(spec.anchor)
    never = np.isnan(anchors)
    if spec.control_group == "never_treated" and not never.any():
        raise NoControlObservations("no never-treated units")
    cluster_cells = dimension_labels(panel, spec.cluster)
    unit_cluster = np.zeros(panel.n_units, dtype=np.int64)
    unit_cluster[panel.unit_codes] = cluster_cells
    codes, G = factorize(unit_cluster)
    offset = spec.base_offset

    rows, psis = [], []
    cohort_sizes = {}
    for g in np.unique(anchors[~never]):
        g = int(g)
        base = g + offset
        if not t0 <= base <= t1:
            continue
        members = anchors == g
        cohort_sizes[g] = int(members.sum())
        for t in range(t0, t1 + 1):
            if t == base:
                continue
            dY = Y[:, t - t0] - Y[:, base - t0]
            ok = np.isfinite(dY)
            if spec.control_group == "never_treated":
                ctrl = never
            else:
                ctrl = never | (anchors > max(t, base))
            ctrl = ctrl & ~members & ok
            treat = members & ok
            if not treat.any():
                continue
            if not ctrl.any():
                continue
            sample = treat | ctrl
            idx = np.flatnonzero(sample)
            D = treat[idx].astype(float)
            Z = None
            if ipw:
                Z = np.column_stack([np.ones(len(idx)), _unit_covariates(panel, ipw, np.full(panel.n_units, base - t0), keep)[idx]])
            att, psi_s = _cell_influence(dY[idx], D, Z)
            psi = np.zeros(G)
            np.add.at(psi, codes[idx], psi_s)
            psis.append(psi)
            rows.append(
                {
                    "cohort": g,
                    "period": t,
                    "event_time": t - g,
                    "att": float(att),
                    "se": float(np.sqrt(psi @ psi)),
                    "n_treated": int(treat.sum()),
                    "n_control": int(ctrl.sum()),
                }
            )
    if not rows:
        raise NoControlObservations("no (cohort, period) cell has both treated and control observations")
    cells = pd.DataFrame(rows)
    return GroupTimeATT(
        cells=cells,
        influence=np.column_stack(psis),
        cohort_sizes=cohort_sizes,
        base_offset=offset,
        control_group=spec.control_group,
        outcome=outcome,
        ipw=bool(ipw),
    )


def aggregate_event_time(
    grid: GroupTimeATT,
    pool_from: int | None = None,
    pool_leads_from: int | None = None,
    confidence: float = 0.95,
) -> CoefficientPath:
    """Average ATT(g, g + e) over cohorts with weights proportional to cohort size.

    Event times ``>= pool_from`` are merged into one bin (and ``<=
    pool_leads_from`` into a lead bin), each cell weighted by its cohort's
    size. Standard errors follow by the delta method over the grid
    covariance; weights are treated as fixed.
    """
    cells = grid.cells
    if cells.empty:
        raise EmptyEventTime("any", "empty grid")
    e = cells["event_time"].to_numpy()
    key = e.copy()
    if pool_from is not None:
        key = np.where(e >= pool_from, pool_from, key)
    if pool_leads_from is not None:
        key = np.where(e <= pool_leads_from, pool_leads_from, key)
    sizes = cells["cohort"].map(grid.cohort_sizes).to_numpy(dtype=float)
    times = sorted(set(int(k) for k in key))
    A = np.zeros((len(times), len(cells)))
    n = []
    for i, t in enumerate(times):
        sel = key == t
        A[i, sel] = sizes[sel] / sizes[sel].sum()
        n.append(float(cells.loc[sel, "n_treated"].sum()))
    est = A @ cells["att"].to_numpy()
    V = A @ grid.vcov @ A.T
    lead_bin = pool_leads_from if pool_leads_from is not None and pool_leads_from in times else None
    lag_bin = pool_from if pool_from is not None and pool_from in times else None
    path = CoefficientPath.from_estimates(
        times,
        est,
        V,
        grid.base_offset,
        lead_bin=lead_bin,
        lag_bin=lag_bin,
        n=n,
        outcome=grid.outcome,
        estimator="callaway_santanna",
        confidence=confidence,
        details=cells,
    )
    return path.with_diagnostics()
