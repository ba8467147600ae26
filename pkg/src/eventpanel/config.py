"""Run configuration: INI sections validated into typed models.

Values are parsed as JSON literals when possible (numbers, booleans, lists,
objects, ``null``) and kept as plain strings otherwise, so

.. code-block:: ini

    [run]
    seed = 42

    [simulate]
    n_units = 500
    adoption_process = {"kind": "fixed", "periods": [6, 10, 14, null]}

    [estimate]
    outcomes = ["adherence"]
    estimator = sun_abraham

is a valid file. Unknown sections or keys are rejected.
"""

from __future__ import annotations

import configparser
import hashlib
import json
from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from .errors import ConfigError

__all__ = [
    "RunConfig",
    "load_config",
    "parse_config",
    "config_hash",
]


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class RunSection(_Section):
    seed: int = 0


class DataSection(_Section):
    """Input panel and its column mapping (when not simulating)."""

    panel: Optional[str] = None
    truth: Optional[str] = None
    unit: str = "unit"
    period: str = "period"
    anchor: Optional[str] = "anchor"
    adoption: Optional[str] = "adoption"
    outcomes: list[str] = Field(default_factory=list)
    covariates: list[str] = Field(default_factory=list)
    labels: dict[str, str] | list[str] = Field(default_factory=dict)
    weight: Optional[str] = None
    treatment: Optional[str] = None


class TimingSection(_Section):
    kind: Literal["fixed", "geometric", "uniform", "never"] = "uniform"
    periods: list[Optional[int]] = Field(default_factory=list)
    hazard: float = 0.1
    start: Optional[int] = None
    end: Optional[int] = None
    never_prob: float = 0.0


class SimulateSection(_Section):
    n_units: int = Field(1000, ge=1)
    t_min: int = 0
    t_max: int = 23
    lambda_H: float = 0.5
    xi: float = 0.1
    loadings: dict[str, tuple[float, float]] = Field(
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
    xi_by_cohort: dict[int, float] = Field(default_factory=dict)
    lambda_by_cohort: dict[int, float] = Field(default_factory=dict)
    binary_cut: Optional[float] = None
    shock_process: TimingSection = Field(default_factory=TimingSection)
    adoption_process: TimingSection = Field(default_factory=lambda: TimingSection(kind="never"))
    n_districts: int = Field(8, ge=1)
    patients_per_provider: int = Field(15, ge=1)
    truth_leads: Optional[int] = None


class EstimateSection(_Section):
    outcomes: Optional[list[str]] = None
    estimator: Literal["twfe", "sun_abraham", "callaway_santanna"] = "sun_abraham"
    anchor: Literal["shock", "adoption"] = "adoption"
    leads: int = 4
    lags: int = 5
    pool_leads: int = 0
    pool_lags: int = 0
    reference_period: int = -2
    fixed_effects: list[str] = Field(default_factory=lambda: ["unit", "period"])
    covariates: list[str] = Field(default_factory=list)
    cluster: str = "unit"
    control_group: Literal["never_treated", "not_yet_treated", "last_treated"] = "never_treated"
    allow_zero_reference: bool = False
    sa_weight_uncertainty: bool = False
    sa_covariates: bool = True
    cs_base_offset: Optional[int] = None
    ipw: Optional[list[str]] = None
    confidence: float = Field(0.95, gt=0, lt=1)
    tol: float = Field(1e-8, gt=0)
    max_iter: int = Field(10_000, ge=1)
    censor: bool = True


class SensitivitySection(_Section):
    m_grid: list[float] = Field(default_factory=lambda: [0.0, 0.5, 1.0, 1.5, 2.0])
    window: Optional[list[int]] = None
    weights: Optional[list[float]] = None
    confidence: float = Field(0.95, gt=0, lt=1)
    measure: Literal["differences", "levels"] = "differences"
    paths: Optional[str] = None

    @field_validator("m_grid")
    @classmethod
    def _nonnegative(cls, v):
        if any(m < 0 for m in v):
            raise ValueError("M values must be nonnegative")
        return v


class PowerSection(_Section):
    alpha: float = Field(0.05, gt=0, lt=1)
    power: float = Field(0.80, gt=0, lt=1)
    windows: list[tuple[int, int]] = Field(default_factory=lambda: [(0, 5)])
    ses: Optional[dict[str, float]] = None
    paths: Optional[str] = None


class DescribeSection(_Section):
    outcomes: Optional[list[str]] = None
    anchor: Literal["shock", "adoption"] = "shock"
    window: int = Field(12, ge=1)
    span: int = Field(3, ge=1)
    group_by: Optional[str] = "treated"
    provider: str = "provider_id"
    threshold: int = 10
    treatment: str = "adopted"
    balance_variables: Optional[list[str]] = None
    baseline_tau: Optional[int] = -1
    district: str = "district_id"
    censor: bool = True


class RunConfig(_Section):
    run: RunSection = Field(default_factory=RunSection)
    data: DataSection = Field(default_factory=DataSection)
    simulate: SimulateSection = Field(default_factory=SimulateSection)
    estimate: EstimateSection = Field(default_factory=EstimateSection)
    sensitivity: SensitivitySection = Field(default_factory=SensitivitySection)
    power: PowerSection = Field(default_factory=PowerSection)
    describe: DescribeSection = Field(default_factory=DescribeSection)
    base_dir: str = Field(".", exclude=True)

    def resolve(self, path: Optional[str]) -> Optional[Path]:
        """Input path relative to the config file's directory."""
        if path is None:
            return None
        p = Path(path)
        return p if p.is_absolute() else Path(self.base_dir) / p

    def resolved(self) -> dict:
        """Plain, JSON-ready view of every setting (defaults filled in)."""
        return json.loads(self.model_dump_json())


def _value(raw: str):
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def parse_config(text: str, base_dir: str | Path = ".") -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}") from None
    data = {name: {k: _value(v) for k, v in parser[name].items()} for name in parser.sections()}
    try:
        return RunConfig(**data, base_dir=str(base_dir))
    except ValidationError as exc:
        problems = "; ".join(
            f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}" for err in exc.errors()
        )
        raise ConfigError(problems) from None


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return RunConfig()
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, base_dir=path.parent)


def config_hash(config: RunConfig) -> str:
    canonical = json.dumps(config.resolved(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()
