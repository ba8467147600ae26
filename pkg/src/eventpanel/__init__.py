"""Staggered-adoption event studies on unit x period panels.

Simulation with known dynamic effects, transition-gap censoring,
high-dimensional fixed-effects regression, TWFE / interaction-weighted /
group-time estimators, relative-magnitudes sensitivity, power and
descriptive diagnostics.
"""

__version__ = "0.1.0"

from .censoring import CensorMask, censor_gap, gap_report
from .estimators import (
    CoefficientPath,
    EventStudySpec,
    GroupTimeATT,
    aggregate_event_time,
    callaway_santanna,
    estimate_path,
    leveling_off_test,
    pretrend_test,
    sun_abraham,
    twfe_event_study,
)
from .fe import cluster_vcov, demean, fe_ols, wald_test
from .inference import average_post_effect, honest_rm_interval, mde, sensitivity
from .panel import PanelDataset, Schema, assign_cohorts, event_time, load_panel, write_panel
from .simulate import StructuralParams, TimingProcess, TruthProfile, simulate_panel, true_event_coefficients

__all__ = [
    "__version__",
    "PanelDataset",
    "Schema",
    "load_panel",
    "write_panel",
    "event_time",
    "assign_cohorts",
    "StructuralParams",
    "TimingProcess",
    "TruthProfile",
    "simulate_panel",
    "true_event_coefficients",
    "CensorMask",
    "censor_gap",
    "gap_report",
    "demean",
    "fe_ols",
    "cluster_vcov",
    "wald_test",
    "EventStudySpec",
    "CoefficientPath",
    "GroupTimeATT",
    "twfe_event_study",
    "sun_abraham",
    "callaway_santanna",
    "aggregate_event_time",
    "estimate_path",
    "pretrend_test",
    "leveling_off_test",
    "average_post_effect",
    "honest_rm_interval",
    "sensitivity",
    "mde",
]
