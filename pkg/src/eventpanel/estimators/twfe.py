"""Conventional fixed-effects event study with endpoint bins."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from ..errors import CollinearDesign, EmptyEventTime
from ..fe import RegressionResult, fe_ols
from ..panel import PanelDataset
from .core import CoefficientPath, EventStudySpec, dimension_labels, kept_mask, reference_mean, tau_label

__all__ = ["EventDesign", "twfe_design", "twfe_event_study"]


@dataclass(frozen=True)
class EventDesign:
    """Regression inputs restricted to the kept cells."""

    y: np.ndarray
    X: np.ndarray
    names: list[str]
    event_times: list[int]
    fe_groups: list[np.ndarray]
    clusters: np.ndarray
    weights: np.ndarray
    tau: np.ndarray
    rows: np.ndarray


def _indicator_columns(tau: np.ndarray, spec: EventStudySpec) -> np.ndarray:
    """Lead/lag indicators; the lead bin is ``1 - D[t + leads + pool_leads]``.

    Units without the anchor (``tau`` NaN) have ``D == 0`` everywhere, so their
    lead-bin indicator is 1 in every period and the unit effect absorbs it.
    """
    window = spec.window()
    X = np.zeros((len(tau), len(window)))
    never = np.isnan(tau)
    with np.errstate(invalid="ignore"):
        for j, t in enumerate(window):
            if t == spec.lead_bin:
                X[:, j] = (tau <= t) | never
            elif t == spec.lag_bin:
                X[:, j] = tau >= t
            else:
                X[:, j] = tau == t
    return X


def twfe_design(panel: PanelDataset, spec: EventStudySpec, outcome: str, mask=None) -> EventDesign:
    keep = kept_mask(panel, mask)
    anchors = panel.cell_anchor(spec.anchor)
    if not np.any(anchors <= panel.period_range[1]):
        raise CollinearDesign("treatment never switches on inside the sample; event indicators are collinear with the fixed effects")
    rows = np.flatnonzero(keep)
    tau = (panel.periods - anchors)[rows]
    X = _indicator_columns(tau, spec)
    window = spec.window()
    names = [f"tau{tau_label(t, spec.lead_bin, spec.lag_bin)}" for t in window]
    treated = ~np.isnan(tau)
    used = []
    for j, t in enumerate(window):
        if np.any(X[treated, j]):
            used.append(j)
        elif t in (spec.lead_bin, spec.lag_bin):
            # an endpoint bin nobody reaches has nothing to accumulate
            warnings.warn(f"endpoint bin {tau_label(t, spec.lead_bin, spec.lag_bin)} has no treated cells and is omitted", stacklevel=3)
        else:
            raise EmptyEventTime(tau_label(t, spec.lead_bin, spec.lag_bin))
    X = X[:, used]
    window = [window[j] for j in used]
    names = [names[j] for j in used]
    cov = [panel.cells[c].to_numpy()[rows] for c in spec.covariates]
    if cov:
        X = np.column_stack([X, *cov])
        names += list(spec.covariates)
    y = panel.cells[outcome].to_numpy()[rows]
    return EventDesign(
        y=y,
        X=X,
        names=names,
        event_times=window,
        fe_groups=[dimension_labels(panel, d)[rows] for d in spec.fixed_effects],
        clusters=dimension_labels(panel, spec.cluster)[rows],
        weights=panel.cells["weight"].to_numpy()[rows],
        tau=tau,
        rows=rows,
    )


def fit_design(design: EventDesign, spec: EventStudySpec) -> RegressionResult:
    res = fe_ols(
        design.y,
        design.X,
        design.fe_groups,
        weights=design.weights,
        clusters=design.clusters,
        names=design.names,
        tol=spec.tol,
        max_iter=spec.max_iter,
    )
    lost = [n for n in res.dropped if n.startswith("tau")]
    if lost:
        raise CollinearDesign(f"event-time indicators {lost} are collinear with the fixed effects/controls")
    return res


def twfe_event_study(panel: PanelDataset, spec: EventStudySpec, outcome: str, mask=None) -> CoefficientPath:
    """Fixed-effects event-study regression with endpoint bins and clustered errors.

    ``mask`` selects the cells used (defaults to the panel's censoring flags).
    """
    design = twfe_design(panel, spec, outcome, mask)
    res = fit_design(design, spec)
    k = len(design.event_times)
    sample = res.sample
    tau_s = design.tau[sample]
    counts = []
    for t in design.event_times:
        if t == spec.lead_bin:
            counts.append(np.sum(tau_s <= t))
        elif t == spec.lag_bin:
            counts.append(np.sum(tau_s >= t))
        else:
            counts.append(np.sum(tau_s == t))
    ref_mean = reference_mean(design.y[sample], tau_s, spec.reference_period)
    path = CoefficientPath.from_estimates(
        design.event_times,
        res.coefficients[:k],
        res.vcov[:k, :k],
        spec.reference_period,
        reference_mean=ref_mean,
        lead_bin=spec.lead_bin if spec.lead_bin in design.event_times else None,
        lag_bin=spec.lag_bin if spec.lag_bin in design.event_times else None,
        n=counts,
        outcome=outcome,
        estimator="twfe",
        confidence=spec.confidence,
    )
    return path.with_diagnostics()
