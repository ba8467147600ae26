"""Interaction-weighted event study for staggered adoption.

Cohort x relative-time effects (CATTs) come from one saturated regression in
which only treated cohorts carry interactions; the control cohort is either
never treated or the last cohort to adopt (with its post-adoption periods
removed). Each relative-time coefficient is then the average of the CATTs
weighted by each cohort's share of the cells observed at that relative time.
"""

from __future__ import annotations

import warnings

import numpy as np
import pandas as pd

from ..errors import CollinearDesign, EmptyEventTime, NoControlCohort
from ..fe import fe_ols, factorize
from ..panel import PanelDataset
from .core import CoefficientPath, EventStudySpec, dimension_labels, kept_mask, reference_mean, tau_label

__all__ = ["sun_abraham", "control_cohort"]


def control_cohort(anchors: np.ndarray, control_group: str, t_max: int) -> tuple[np.ndarray, float | None]:
    """Per-cell control flag and, for ``last_treated``, the control cohort's adoption date."""
    never = np.isnan(anchors)
    if control_group == "never_treated":
        if not never.any():
            raise NoControlCohort("no never-treated units to serve as controls")
        return never, None
    if control_group == "last_treated":
        treated = anchors[~never]
        if treated.size == 0:
            raise NoControlCohort("no treated cohorts")
        last = float(treated.max())
        if np.all(treated == last):
            raise NoControlCohort("only one cohort; nothing left to compare against the last-treated cohort")
        return anchors == last, last
    raise NoControlCohort(f"control group {control_group!r} is not available for the interaction-weighted estimator")


def sun_abraham(panel: PanelDataset, spec: EventStudySpec, outcome: str, mask=None) -> CoefficientPath:
    """Interaction-weighted event-study path.

    Interaction weights are each cohort's share (by cell weight) of the cells
    in the estimation sample at a relative time; they are nonnegative and sum
    to one. By default the covariance treats the weights as fixed;
    ``spec.sa_weight_uncertainty`` adds the linearized share-estimation term.
    """
    keep = kept_mask(panel, mask)
    anchors = panel.cell_anchor(spec.anchor)
    is_control, last = control_cohort(anchors, spec.control_group, panel.period_range[1])
    if last is not None:
        keep = keep & (panel.periods < last)
    rows = np.flatnonzero(keep)
    tau = (panel.periods - anchors)[rows]
    cohort = anchors[rows]
    control = is_control[rows]
    binned = spec.bin_of(np.where(control, 0, tau))
    window = spec.window()

    # cohorts need an observed reference cell, otherwise their interactions
    # are collinear with the unit effects and the normalization is lost
    cohorts = []
    for g in np.unique(cohort[~control]):
        in_g = (cohort == g) & ~control
        if np.any(in_g & (binned == spec.reference_period)):
            cohorts.append(g)
        else:
            warnings.warn(f"cohort {g:g} has no observed reference period and is dropped", stacklevel=2)
            rows_drop = in_g
            rows, tau, cohort, control, binned = (
                a[~rows_drop] for a in (rows, tau, cohort, control, binned)
            )
    if not cohorts:
        raise NoControlCohort("no treated cohort with an observed reference period")

    columns, cells = [], []
    for g in cohorts:
        in_g = (cohort == g) & ~control
        for t in window:
            col = in_g & (binned == t)
            if col.any():
                columns.append(col.astype(float))
                cells.append((g, t))
            elif np.any(in_g) and _observable(g, t, spec, panel.period_range, last):
                warnings.warn(f"empty cell (cohort {g:g}, event time {t}); its weight is redistributed", stacklevel=2)
    names = [f"g{g:g}_tau{tau_label(t, spec.lead_bin, spec.lag_bin)}" for g, t in cells]
    X = np.column_stack(columns)
    if spec.sa_covariates and spec.covariates:
        X = np.column_stack([X, *(panel.cells[c].to_numpy()[rows] for c in spec.covariates)])
        names += list(spec.covariates)
    y = panel.cells[outcome].to_numpy()[rows]
    weights = panel.cells["weight"].to_numpy()[rows]
    clusters = dimension_labels(panel, spec.cluster)[rows]
    res = fe_ols(
        y,
        X,
        [dimension_labels(panel, d)[rows] for d in spec.fixed_effects],
        weights=weights,
        clusters=clusters,
        names=names,
        tol=spec.tol,
        max_iter=spec.max_iter,
    )
    if any(n.startswith("g") and "_tau" in n for n in res.dropped):
        raise CollinearDesign(f"cohort interactions {list(res.dropped)} are collinear with the fixed effects")
    n_cells = len(cells)
    catt = res.coefficients[:n_cells]
    V_catt = res.vcov[:n_cells, :n_cells]

    sample = res.sample
    share_mass = np.array([weights[sample][X[sample, j] > 0].sum() for j in range(n_cells)])
    times = [t for t in window if any(c[1] == t for c in cells)]
    missing = [t for t in window if t not in times and t not in (spec.lead_bin, spec.lag_bin)]
    if missing:
        raise EmptyEventTime(tau_label(missing[0], spec.lead_bin, spec.lag_bin))
    W = np.zeros((len(times), n_cells))
    for i, t in enumerate(times):
        idx = [j for j, c in enumerate(cells) if c[1] == t]
        W[i, idx] = share_mass[idx] / share_mass[idx].sum()
    est = W @ catt
    V = W @ V_catt @ W.T
    if spec.sa_weight_uncertainty:
        V = V + _share_variance(X[sample], weights[sample], clusters[sample], catt, W, cells, times)

    counts = [float(sum(share_mass[j] for j, c in enumerate(cells) if c[1] == t)) for t in times]
    treated_rows = sample & ~control
    details = pd.DataFrame(
        {
            "cohort": [c[0] for c in cells],
            "event_time": [c[1] for c in cells],
            "catt": catt,
            "se": np.sqrt(np.clip(np.diag(V_catt), 0, None)),
            "weight": [W[times.index(c[1]), j] for j, c in enumerate(cells)],
            "n": share_mass,
        }
    )
    path = CoefficientPath.from_estimates(
        times,
        est,
        V,
        spec.reference_period,
        reference_mean=reference_mean(y[treated_rows], tau[treated_rows], spec.reference_period),
        lead_bin=spec.lead_bin if spec.lead_bin in times else None,
        lag_bin=spec.lag_bin if spec.lag_bin in times else None,
        n=counts,
        outcome=outcome,
        estimator="sun_abraham",
        confidence=spec.confidence,
        details=details,
    )
    return path.with_diagnostics()


def _observable(g: float, t: int, spec: EventStudySpec, period_range, last) -> bool:
    """Whether cell (g, t) could hold cells inside the sample window."""
    lo_tau = period_range[0] - g
    hi_tau = (period_range[1] if last is None else last - 1) - g
    if t == spec.lead_bin:
        return lo_tau <= t
    if t == spec.lag_bin:
        return hi_tau >= t
    return lo_tau <= t <= hi_tau


def _share_variance(X, weights, clusters, catt, W, cells, times) -> np.ndarray:
    """Clustered variance of the aggregated path from estimating the cohort shares.

    With ``delta_l = sum_c w_c CATT(g_c, l) / sum_c w_c`` over cells ``c`` at
    relative time ``l``, each cell's linearized contribution is
    ``w_c (CATT(g_c, l) - delta_l) / sum_c w_c``; contributions are summed
    within clusters.
    """
    codes, G = factorize(clusters)
    psi = np.zeros((G, len(times)))
    for i, t in enumerate(times):
        idx = [j for j, c in enumerate(cells) if c[1] == t]
        at_t = X[:, idx] > 0
        rows = at_t.any(axis=1)
        cell_catt = (at_t[rows] * catt[idx]).sum(axis=1)
        delta = W[i, idx] @ catt[idx]
        total = weights[rows].sum()
        contrib = weights[rows] * (cell_catt - delta) / total
        np.add.at(psi[:, i], codes[rows], contrib)
    return psi.T @ psi
