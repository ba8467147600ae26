"""Shared pieces of the event-study estimators: specification, coefficient
paths, design construction and the pre-trend / leveling-off diagnostics."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
import pandas as pd
from scipy.special import ndtri

from ..errors import DegenerateRestriction
from ..fe import factorize, wald_test
from ..panel import PanelDataset

__all__ = [
    "EventStudySpec",
    "CoefficientPath",
    "pretrend_test",
    "leveling_off_test",
    "kept_mask",
]

ESTIMATORS = ("twfe", "sun_abraham", "callaway_santanna")
CONTROL_GROUPS = ("never_treated", "not_yet_treated", "last_treated")


@dataclass(frozen=True)
class EventStudySpec:
    """Estimation window, normalization, fixed effects and inference choices.

    The window has ``leads`` + ``pool_leads`` explicit lead coefficients and
    ``lags`` + ``pool_lags`` explicit lags (event times
    ``-leads-pool_leads .. lags+pool_lags-1``), plus two endpoint bins:
    ``tau <= -leads-pool_leads-1`` and ``tau >= lags+pool_lags``.
    """

    anchor: str = "adoption"
    leads: int = 4
    lags: int = 5
    pool_leads: int = 0
    pool_lags: int = 0
    reference_period: int = -2
    fixed_effects: tuple[str, ...] = ("unit", "period")
    covariates: tuple[str, ...] = ()
    cluster: str = "unit"
    estimator: str = "sun_abraham"
    control_group: str = "never_treated"
    allow_zero_reference: bool = False
    sa_weight_uncertainty: bool = False
    sa_covariates: bool = True
    cs_base_offset: int | None = None
    confidence: float = 0.95
    tol: float = 1e-8
    max_iter: int = 10_000

    def __post_init__(self):
        object.__setattr__(self, "fixed_effects", tuple(self.fixed_effects))
        object.__setattr__(self, "covariates", tuple(self.covariates))
        if self.leads < 1 or self.lags < 1:
            raise ValueError("leads and lags must be >= 1")
        if self.pool_leads < 0 or self.pool_lags < 0:
            raise ValueError("endpoint pools must be >= 0")
        if not self.lead_bin <= self.reference_period <= self.lag_bin:
            raise ValueError(
                f"reference_period {self.reference_period} outside [{self.lead_bin}, {self.lag_bin}]"
            )
        if self.reference_period == 0 and not self.allow_zero_reference:
            raise ValueError("reference_period 0 requires allow_zero_reference=True")
        if self.estimator not in ESTIMATORS:
            raise ValueError(f"estimator must be one of {ESTIMATORS}")
        if self.control_group not in CONTROL_GROUPS:
            raise ValueError(f"control_group must be one of {CONTROL_GROUPS}")
        if self.anchor not in ("shock", "adoption"):
            raise ValueError("anchor must be 'shock' or 'adoption'")
        if not 0 < self.confidence < 1:
            raise ValueError("confidence must lie in (0, 1)")

    @property
    def lead_bin(self) -> int:
        """Upper edge of the lead endpoint bin ``tau <= lead_bin``."""
        return -self.leads - self.pool_leads - 1

    @property
    def lag_bin(self) -> int:
        """Lower edge of the lag endpoint bin ``tau >= lag_bin``."""
        return self.lags + self.pool_lags

    @property
    def base_offset(self) -> int:
        return self.reference_period if self.cs_base_offset is None else self.cs_base_offset

    def window(self) -> list[int]:
        """Estimated event times (bins at their edges), reference excluded."""
        return [t for t in range(self.lead_bin, self.lag_bin + 1) if t != self.reference_period]

    def bin_of(self, tau: np.ndarray) -> np.ndarray:
        """Map raw event times onto window positions (edges absorb the tails)."""
        return np.clip(tau, self.lead_bin, self.lag_bin)


def tau_label(tau: int, lead_bin: int | None, lag_bin: int | None) -> str:
    if lead_bin is not None and tau == lead_bin:
        return f"<={tau}"
    if lag_bin is not None and tau == lag_bin:
        return f">={tau}"
    return str(tau)


@dataclass(frozen=True)
class CoefficientPath:
    """Event-time coefficients with full covariance.

    ``event_times`` includes the reference period, whose estimate and se are
    pinned to 0. ``vcov`` covers every other entry, in order. Endpoint bins
    sit at their edge values and are flagged by ``lead_bin``/``lag_bin``.
    """

    event_times: tuple[int, ...]
    estimates: np.ndarray
    ses: np.ndarray
    vcov: np.ndarray
    reference_period: int
    reference_mean: float = float("nan")
    lead_bin: int | None = None
    lag_bin: int | None = None
    n: np.ndarray | None = None
    outcome: str = ""
    estimator: str = ""
    confidence: float = 0.95
    pretrend_p: float | None = None
    leveloff_p: float | None = None
    details: pd.DataFrame | None = field(default=None, repr=False, compare=False)

    @classmethod
    def from_estimates(cls, event_times, estimates, vcov, reference_period, **kw) -> "CoefficientPath":
        """Build a path from estimates over ``event_times`` (reference excluded)."""
        event_times = [int(t) for t in event_times]
        estimates = np.asarray(estimates, dtype=float)
        vcov = np.asarray(vcov, dtype=float)
        if estimates.shape != (len(event_times),) or vcov.shape != (len(event_times),) * 2:
            raise ValueError("estimates and vcov must match event_times")
        if reference_period in event_times:
            raise ValueError("event_times must exclude the reference period")
        order = np.argsort(event_times)
        taus = [event_times[i] for i in order]
        est = estimates[order]
        V = vcov[np.ix_(order, order)]
        full_t = sorted(taus + [reference_period])
        pos = full_t.index(reference_period)
        full_est = np.insert(est, pos, 0.0)
        se = np.sqrt(np.clip(np.diag(V), 0.0, None))
        full_se = np.insert(se, pos, 0.0)
        n = kw.pop("n", None)
        if n is not None:
            n = np.asarray(n, dtype=float)[order]
            n = np.insert(n, pos, np.nan)
        return cls(tuple(full_t), full_est, full_se, V, reference_period, n=n, **kw)

    @property
    def coefficient_times(self) -> tuple[int, ...]:
        return tuple(t for t in self.event_times if t != self.reference_period)

    @property
    def coefficients(self) -> np.ndarray:
        """Estimates excluding the reference, aligned with ``vcov``."""
        return np.array([b for t, b in zip(self.event_times, self.estimates) if t != self.reference_period])

    @property
    def labels(self) -> list[str]:
        return [tau_label(t, self.lead_bin, self.lag_bin) for t in self.event_times]

    def index(self, tau: int) -> int:
        """Position of ``tau`` within ``coefficients``/``vcov``."""
        return self.coefficient_times.index(int(tau))

    def estimate(self, tau: int) -> float:
        return float(self.estimates[self.event_times.index(int(tau))])

    def se(self, tau: int) -> float:
        return float(self.ses[self.event_times.index(int(tau))])

    def leads(self) -> list[int]:
        return [t for t in self.coefficient_times if t < 0]

    def lags(self) -> list[int]:
        return [t for t in self.coefficient_times if t >= 0]

    def ci(self, confidence: float | None = None) -> tuple[np.ndarray, np.ndarray]:
        z = ndtri(0.5 + (confidence or self.confidence) / 2.0)
        return self.estimates - z * self.ses, self.estimates + z * self.ses

    def with_diagnostics(self) -> "CoefficientPath":
        pre = post = None
        try:
            pre = pretrend_test(self)
        except DegenerateRestriction:
            pass
        try:
            post = leveling_off_test(self)
        except DegenerateRestriction:
            pass
        return replace(self, pretrend_p=pre, leveloff_p=post)

    def to_dict(self) -> dict:
        """JSON-ready view (no NaN; ``details`` omitted)."""

        def clean(x):
            x = float(x)
            return x if np.isfinite(x) else None

        return {
            "event_times": list(self.event_times),
            "estimates": [clean(b) for b in self.estimates],
            "vcov": [[clean(v) for v in row] for row in self.vcov],
            "reference_period": self.reference_period,
            "reference_mean": clean(self.reference_mean),
            "lead_bin": self.lead_bin,
            "lag_bin": self.lag_bin,
            "n": None if self.n is None else [clean(v) for v in self.n],
            "outcome": self.outcome,
            "estimator": self.estimator,
            "confidence": self.confidence,
            "pretrend_p": self.pretrend_p,
            "leveloff_p": self.leveloff_p,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CoefficientPath":
        def num(x):
            return np.nan if x is None else float(x)

        times = list(d["event_times"])
        ref = d["reference_period"]
        keep = [i for i, t in enumerate(times) if t != ref]
        n = d.get("n")
        return cls.from_estimates(
            [times[i] for i in keep],
            [num(d["estimates"][i]) for i in keep],
            np.array([[num(v) for v in row] for row in d["vcov"]], dtype=float).reshape(len(keep), len(keep)),
            ref,
            reference_mean=num(d.get("reference_mean")),
            lead_bin=d.get("lead_bin"),
            lag_bin=d.get("lag_bin"),
            n=None if n is None else [num(n[i]) for i in keep],
            outcome=d.get("outcome", ""),
            estimator=d.get("estimator", ""),
            confidence=d.get("confidence", 0.95),
            pretrend_p=d.get("pretrend_p"),
            leveloff_p=d.get("leveloff_p"),
        )

    def table(self) -> pd.DataFrame:
        lo, hi = self.ci()
        return pd.DataFrame(
            {
                "event_time": list(self.event_times),
                "label": self.labels,
                "estimate": self.estimates,
                "se": self.ses,
                "ci_lo": lo,
                "ci_hi": hi,
                "n": self.n if self.n is not None else np.full(len(self.event_times), np.nan),
            }
        )


def _selector(path: CoefficientPath, taus: Sequence[int]) -> np.ndarray:
    R = np.zeros((len(taus), len(path.coefficient_times)))
    for i, t in enumerate(taus):
        R[i, path.index(t)] = 1.0
    return R


def pretrend_test(path: CoefficientPath, leads: Sequence[int] | None = None) -> float:
    """p-value of the joint Wald test that the selected lead coefficients are 0.

    By default every lead except ``tau = -1`` (a transitional period) enters.
    """
    if leads is None:
        leads = [t for t in path.leads() if t != -1]
    leads = list(leads)
    missing = [t for t in leads if t not in path.coefficient_times]
    if missing:
        raise DegenerateRestriction(f"lead coefficients {missing} are not in the path")
    if not leads:
        raise DegenerateRestriction("no lead coefficients to test")
    return wald_test(path, _selector(path, leads)).p_value


def leveling_off_test(path: CoefficientPath, last_k: int = 3) -> float:
    """p-value of the joint Wald test that the last ``last_k`` post coefficients are equal."""
    post = path.lags()
    if last_k < 2 or len(post) < last_k:
        raise DegenerateRestriction(f"need {last_k} >= 2 post coefficients, path has {len(post)}")
    chosen = post[-last_k:]
    S = _selector(path, chosen)
    return wald_test(path, S[:-1] - S[1:]).p_value


# ---------------------------------------------------------------------------
# design helpers


def kept_mask(panel: PanelDataset, mask=None) -> np.ndarray:
    """Cells entering estimation: a CensorMask, boolean array, or the panel's own flags."""
    if mask is None:
        return panel.kept()
    keep = getattr(mask, "keep", mask)
    keep = np.asarray(keep, dtype=bool)
    if keep.shape != (panel.n_cells,):
        raise ValueError("mask does not align with panel cells")
    return keep


def dimension_labels(panel: PanelDataset, dim: str) -> np.ndarray:
    """Per-cell labels for a grouping dimension.

    ``unit``, ``period``, any static label name (``provider_id`` or the short
    ``provider``), and ``<label>_period`` interactions such as ``district_period``.
    """
    if dim == "unit":
        return panel.unit_codes
    if dim == "period":
        return panel.periods
    if dim.endswith("_period"):
        base = dimension_labels(panel, dim[: -len("_period")])
        codes, _ = factorize(base)
        span = panel.period_range[1] - panel.period_range[0] + 1
        return codes.astype(np.int64) * span + (panel.periods - panel.period_range[0])
    name = dim if dim in panel.units.columns else f"{dim}_id"
    if name not in panel.units.columns:
        raise ValueError(f"unknown grouping dimension {dim!r}")
    values = panel.cell_label(name)
    return factorize(np.array([str(v) for v in values]))[0]


def reference_mean(y: np.ndarray, tau: np.ndarray, reference: int) -> float:
    sel = (tau == reference) & np.isfinite(y)
    return float(y[sel].mean()) if sel.any() else float("nan")
