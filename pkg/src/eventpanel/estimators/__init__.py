"""Event-study estimators: TWFE, interaction-weighted, and group-time ATT."""

from __future__ import annotations

from dataclasses import replace

import numpy as np

from .callaway import GroupTimeATT, aggregate_event_time, callaway_santanna
from .core import CoefficientPath, EventStudySpec, kept_mask, leveling_off_test, pretrend_test
from .sun_abraham import sun_abraham
from .twfe import twfe_design, twfe_event_study

__all__ = [
    "EventStudySpec",
    "CoefficientPath",
    "GroupTimeATT",
    "twfe_event_study",
    "twfe_design",
    "sun_abraham",
    "callaway_santanna",
    "aggregate_event_time",
    "pretrend_test",
    "leveling_off_test",
    "estimate_path",
]


def estimate_path(panel, spec: EventStudySpec, outcome: str, mask=None, ipw=None) -> CoefficientPath:
    """Run ``spec.estimator`` and return an event-time path.

    Group-time ATTs are aggregated with endpoint bins at the spec's window
    edges, so all three estimators report comparable paths.
    """
    if spec.estimator == "twfe":
        return twfe_event_study(panel, spec, outcome, mask)
    if spec.estimator == "sun_abraham":
        return sun_abraham(panel, spec, outcome, mask)
    grid = callaway_santanna(panel, spec, outcome, mask, ipw=ipw)
    path = aggregate_event_time(grid, pool_from=spec.lag_bin, pool_leads_from=spec.lead_bin, confidence=spec.confidence)
    keep = kept_mask(panel, mask)
    tau = panel.event_times(spec.anchor)
    y = panel.cells[outcome].to_numpy()
    sel = keep & (tau == spec.base_offset) & np.isfinite(y)
    ref = float(y[sel].mean()) if sel.any() else float("nan")
    return replace(path, reference_mean=ref)
