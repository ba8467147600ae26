"""Synthetic panels from a linearized health-capital model with known effects.

Health deviations follow the stable AR(1) law

    h[t+1] = lambda_H * h[t] + xi * n[t] + u[t]

where ``n`` is the absorbing program indicator. Investment-type outcomes load
on health with ``q`` plus a direct program shift ``r``; emergency-room use
loads with ``pi_1`` and a direct shift ``-pi_2``. Without shocks the dynamic
effect at event time ``k >= 0`` is

    beta_k = r + q * xi * (1 - lambda_H**k) / (1 - lambda_H)

which :func:`true_event_coefficients` evaluates in closed form.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
import pandas as pd

from .errors import InvalidAdoptionProcess, UnstablePersistence
from .panel import NEVER_TREATED, PanelDataset

__all__ = [
    "TimingProcess",
    "StructuralParams",
    "TruthProfile",
    "health_path",
    "true_event_coefficients",
    "simulate_panel",
    "cell_truth",
    "write_truth",
]

ER = "er"
INVESTMENT = "investment"


@dataclass(frozen=True)
class TimingProcess:
    """How a unit's anchor date is drawn.

    kind
        ``fixed``: units take ``periods`` cyclically by index (``None`` in the
        list means the unit never receives the event), which gives exact
        cohort shares. ``geometric``: first event at ``start + G - 1`` with
        ``G ~ Geometric(hazard)``; dates past the sample end are kept as
        "after sample end". ``uniform``: uniform over ``[start, end]``
        (defaults to the panel's period range). ``never``: no unit is treated.
    never_prob
        Extra probability, drawn per unit, that the event never happens.
    """

    kind: str = "uniform"
    periods: Sequence[int | None] = ()
    hazard: float = 0.1
    start: int | None = None
    end: int | None = None
    never_prob: float = 0.0

    def validate(self) -> None:
        if self.kind not in {"fixed", "geometric", "uniform", "never"}:
            raise InvalidAdoptionProcess(f"unknown timing process {self.kind!r}")
        if self.kind == "fixed" and not self.periods:
            raise InvalidAdoptionProcess("fixed timing needs a nonempty period list")
        if self.kind == "geometric" and not 0 < self.hazard <= 1:
            raise InvalidAdoptionProcess(f"hazard must lie in (0, 1], got {self.hazard}")
        if not 0 <= self.never_prob <= 1:
            raise InvalidAdoptionProcess(f"never_prob must lie in [0, 1], got {self.never_prob}")

    def draw(self, rng: np.random.Generator, index: int, t_min: int, t_max: int) -> int | None:
        # always consume the same number of draws so streams stay aligned
        never = rng.random() < self.never_prob
        if self.kind == "fixed":
            value = self.periods[index % len(self.periods)]
        elif self.kind == "geometric":
            start = t_min if self.start is None else self.start
            value = start + int(rng.geometric(self.hazard)) - 1
        elif self.kind == "uniform":
            lo = t_min if self.start is None else self.start
            hi = t_max if self.end is None else self.end
            value = int(rng.integers(lo, hi + 1))
        else:
            value = None
        return None if never or value is None else int(value)


@dataclass(frozen=True)
class StructuralParams:
    """Parameters of the linearized model.

    ``loadings`` maps each investment outcome to ``(q, r)``. ``xi_by_cohort``
    and ``lambda_by_cohort`` override the scalar values for the listed
    adoption cohorts, giving heterogeneous treatment effects.
    """

    lambda_H: float = 0.5
    xi: float = 0.1
    loadings: Mapping[str, tuple[float, float]] = field(
        default_factory=lambda: {"adherence": (1.0, 0.02), "cardiology": (0.6, 0.01), "echo": (0.4, 0.0)}
    )
    pi_1: float = -0.4
    pi_2: float = 0.0
    alpha_H: float = 0.5
    alpha_N: float = 0.05
    sd_u: float = 0.0
    sd_v: float = 0.0
    sd_eps: float = 0.0
    fe_unit_sd: float = 0.0
    fe_time_sd: float = 0.0
    xi_by_cohort: Mapping[int, float] = field(default_factory=dict)
    lambda_by_cohort: Mapping[int, float] = field(default_factory=dict)
    binary_cut: float | None = None

    def validate(self) -> None:
        for lam in (self.lambda_H, *self.lambda_by_cohort.values()):
            if not abs(lam) < 1:
                raise UnstablePersistence(f"|lambda_H| must be < 1, got {lam}")
        for name in ("sd_u", "sd_v", "sd_eps", "fe_unit_sd", "fe_time_sd"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")

    def persistence(self, cohort=None) -> float:
        return self.lambda_by_cohort.get(cohort, self.lambda_H)

    def shift(self, cohort=None) -> float:
        return self.xi_by_cohort.get(cohort, self.xi)

    def outcome_loadings(self) -> dict[str, tuple[float, float]]:
        """``(loading on h, direct program effect)`` for every emitted outcome."""
        out = {name: (float(q), float(r)) for name, (q, r) in self.loadings.items()}
        out[ER] = (self.pi_1, -self.pi_2)
        out[INVESTMENT] = (self.alpha_H, self.alpha_N)
        return out


def health_path(params: StructuralParams, k: int, cohort=None) -> float:
    """Noise-free health deviation ``k`` periods after program start."""
    lam = params.persistence(cohort)
    if not abs(lam) < 1:
        raise UnstablePersistence(f"|lambda_H| must be < 1, got {lam}")
    if k <= 0:
        return 0.0
    return params.shift(cohort) * (1.0 - lam**k) / (1.0 - lam)


@dataclass(frozen=True)
class TruthProfile:
    """True dynamic effects per outcome, for ``k = 0..horizon``.

    ``betas`` uses the scalar parameters; ``cohort_betas`` holds one path per
    cohort listed in the per-cohort overrides. Leads are zero.
    """

    horizon: int
    betas: dict[str, np.ndarray]
    limits: dict[str, float]
    cohort_betas: dict[str, dict[int, np.ndarray]] = field(default_factory=dict)
    cohort_limits: dict[str, dict[int, float]] = field(default_factory=dict)
    cohort_sizes: dict = field(default_factory=dict)

    @property
    def outcomes(self) -> tuple[str, ...]:
        return tuple(self.betas)

    def beta(self, outcome: str, k: int, cohort=None) -> float:
        if k < 0:
            return 0.0
        path = self.cohort_betas.get(outcome, {}).get(cohort, self.betas[outcome])
        if k > self.horizon:
            raise ValueError(f"event time {k} beyond truth horizon {self.horizon}")
        return float(path[k])

    def average(self, outcome: str, k: int) -> float:
        """Cohort-size weighted truth at event time ``k`` over treated cohorts."""
        sizes = {g: n for g, n in self.cohort_sizes.items() if g != NEVER_TREATED}
        if not sizes:
            return self.beta(outcome, k)
        total = sum(sizes.values())
        return sum(n * self.beta(outcome, k, g) for g, n in sizes.items()) / total


def _beta_path(params: StructuralParams, q: float, r: float, horizon: int, cohort=None) -> tuple[np.ndarray, float]:
    h = np.array([health_path(params, k, cohort) for k in range(horizon + 1)])
    lam = params.persistence(cohort)
    limit = r + q * params.shift(cohort) / (1.0 - lam)
    return r + q * h, limit


def true_event_coefficients(params: StructuralParams, horizon: int) -> TruthProfile:
    """Closed-form event-study coefficients ``beta_k`` for ``k = 0..horizon``."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    params.validate()
    betas, limits, cohort_betas, cohort_limits = {}, {}, {}, {}
    cohorts = sorted(set(params.xi_by_cohort) | set(params.lambda_by_cohort))
    for name, (q, r) in params.outcome_loadings().items():
        betas[name], limits[name] = _beta_path(params, q, r, horizon)
        if cohorts:
            cohort_betas[name], cohort_limits[name] = {}, {}
            for g in cohorts:
                cohort_betas[name][g], cohort_limits[name][g] = _beta_path(params, q, r, horizon, g)
    return TruthProfile(horizon, betas, limits, cohort_betas, cohort_limits)


def _unit_labels(rng: np.random.Generator, n_districts: int, n_providers: int) -> dict:
    district = int(rng.integers(n_districts))
    provider = int(rng.integers(n_providers))
    return {
        "district_id": f"d{district:02d}",
        "provider_id": f"p{provider:04d}",
        "sex": float(rng.random() < 0.52),
        "age_at_baseline": float(np.clip(np.round(rng.normal(79.6, 10.8)), 16, 112)),
        "comorbidity_score": float(rng.integers(1, 7)),
        "deprivation": float(rng.integers(1, 6)),
    }


def simulate_panel(
    params: StructuralParams,
    n_units: int,
    periods: tuple[int, int],
    seed: int,
    shock_process: TimingProcess | None = None,
    adoption_process: TimingProcess | None = None,
    n_districts: int = 8,
    patients_per_provider: int = 15,
) -> tuple[PanelDataset, TruthProfile]:
    """Draw a balanced panel and the matching closed-form truth.

    Every unit's randomness comes from its own stream seeded by
    ``(seed, unit index)``; period effects use a separate stream. Identical
    arguments therefore give bit-identical panels.
    """
    params.validate()
    if n_units < 1:
        raise ValueError("n_units must be >= 1")
    t_min, t_max = int(periods[0]), int(periods[1])
    if t_max < t_min:
        raise ValueError("empty period range")
    shock_process = shock_process or TimingProcess("uniform")
    adoption_process = adoption_process or TimingProcess("never")
    shock_process.validate()
    adoption_process.validate()

    T = t_max - t_min + 1
    loadings = params.outcome_loadings()
    names = list(loadings)
    root = np.random.SeedSequence(seed)
    time_rng = np.random.default_rng(root.spawn(1)[0])
    time_fx = {m: time_rng.normal(0.0, params.fe_time_sd, T) if params.fe_time_sd > 0 else np.zeros(T) for m in names}
    n_providers = max(1, n_units // max(1, patients_per_provider))
    t_grid = np.arange(t_min, t_max + 1)

    unit_rows = {}
    blocks = []
    cohort_sizes: dict = {}
    for i in range(n_units):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(1, i)))
        shock = shock_process.draw(rng, i, t_min, t_max)
        adoption = adoption_process.draw(rng, i, t_min, t_max)
        labels = _unit_labels(rng, n_districts, n_providers)
        unit_fx = {m: rng.normal(0.0, params.fe_unit_sd) if params.fe_unit_sd > 0 else 0.0 for m in names}
        u = rng.normal(0.0, params.sd_u, T) if params.sd_u > 0 else np.zeros(T)
        v = rng.normal(0.0, params.sd_v, T) if params.sd_v > 0 else np.zeros(T)
        eps = {m: rng.normal(0.0, params.sd_eps, T) if params.sd_eps > 0 else np.zeros(T) for m in names}

        cohort = NEVER_TREATED if adoption is None else adoption
        cohort_sizes[cohort] = cohort_sizes.get(cohort, 0) + 1
        lam, xi = params.persistence(adoption), params.shift(adoption)
        n = (t_grid >= adoption).astype(float) if adoption is not None else np.zeros(T)
        h = np.zeros(T)
        for t in range(T - 1):
            h[t + 1] = lam * h[t] + xi * n[t] + u[t]

        block = {"unit": np.full(T, f"u{i:06d}"), "period": t_grid}
        for m in names:
            q, r = loadings[m]
            noise = v if m == INVESTMENT else eps[m]
            y = unit_fx[m] + time_fx[m] + q * h + r * n + noise
            if params.binary_cut is not None:
                y = (y > params.binary_cut).astype(float)
            block[m] = y
        blocks.append(block)
        unit_rows[f"u{i:06d}"] = {"anchor": shock, "adoption": adoption, **labels}

    cells = pd.DataFrame({k: np.concatenate([b[k] for b in blocks]) for k in ["unit", "period", *names]})
    units = pd.DataFrame.from_dict(unit_rows, orient="index")
    labels = ("district_id", "provider_id", "sex", "age_at_baseline", "comorbidity_score", "deprivation")
    panel = PanelDataset(units=units, cells=cells, outcomes=tuple(names), labels=labels, period_range=(t_min, t_max))

    adopted = [g for g in cohort_sizes if g != NEVER_TREATED]
    horizon = max([T - 1, 1] + [t_max - g for g in adopted])
    truth = true_event_coefficients(params, horizon)
    truth = TruthProfile(
        truth.horizon, truth.betas, truth.limits, truth.cohort_betas, truth.cohort_limits, dict(sorted(cohort_sizes.items()))
    )
    return panel, truth


def cell_truth(truth: TruthProfile, panel: PanelDataset, outcome: str, anchor: str = "adoption") -> np.ndarray:
    """True treatment effect carried by each cell (zero before adoption or if never treated).

    Averaging this over the cells that identify an event-time coefficient
    gives that coefficient's estimand under cell-share weighting.
    """
    cohorts = panel.cell_anchor(anchor)
    tau = panel.periods - cohorts
    out = np.zeros(panel.n_cells)
    treated = ~np.isnan(cohorts) & (tau >= 0)
    for g in np.unique(cohorts[treated]):
        sel = treated & (cohorts == g)
        g_key = int(g)
        path = truth.cohort_betas.get(outcome, {}).get(g_key, truth.betas[outcome])
        out[sel] = path[tau[sel].astype(int)]
    return out


def write_truth(truth: TruthProfile, path: str | Path, lead_horizon: int | None = None, header: Iterable[str] = ()) -> None:
    """Sidecar truth file: one ``outcome, event_time, beta_true`` row per (m, k).

    With per-cohort parameters the value is the cohort-size weighted average.
    """
    leads = truth.horizon if lead_horizon is None else lead_horizon
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        for line in header:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["outcome", "event_time", "beta_true"])
        for m in truth.outcomes:
            for k in range(-leads, truth.horizon + 1):
                w.writerow([m, k, repr(float(truth.average(m, k)))])
