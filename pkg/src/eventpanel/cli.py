"""Batch command-line front end.

``eventpanel <command> --config run.ini --out DIR [--seed N] [--quiet] [--overwrite]``

Commands: simulate, estimate, sensitivity, power, describe. Every output file
starts with a header naming the tool version, the config hash and the seed
(a ``#`` comment for delimited files, a ``_header`` entry for JSON). Failures
exit nonzero and print a one-line JSON error record on stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__
from .censoring import censor_gap, gap_histogram, write_gap_report
from .config import RunConfig, config_hash, load_config
from .descriptives import balance_table, district_intake, loo_leniency, moving_average_trajectory
from .errors import ConfigError, EventPanelError
from .estimators import CoefficientPath, EventStudySpec, estimate_path
from .inference import average_post_effect, mde, sensitivity
from .panel import PanelDataset, Schema, load_panel, write_panel
from .simulate import StructuralParams, TimingProcess, simulate_panel, write_truth

log = logging.getLogger("eventpanel")

COMMANDS = ("simulate", "estimate", "sensitivity", "power", "describe")
DEFAULT_BALANCE = ("sex", "age_at_baseline", "comorbidity_score", "deprivation")


class Run:
    """Output directory plus the provenance stamped on every file."""

    def __init__(self, config: RunConfig, out: Path, command: str):
        self.config = config
        self.out = out
        self.command = command
        self.hash = config_hash(config)
        self.seed = config.run.seed

    @property
    def header(self) -> list[str]:
        return [f"eventpanel {__version__} command={self.command} config_sha256={self.hash} seed={self.seed}"]

    def path(self, name: str) -> Path:
        return self.out / name

    def table(self, name: str, frame: pd.DataFrame, extra: tuple[str, ...] = ()) -> None:
        with self.path(name).open("w", newline="", encoding="utf-8") as fh:
            for line in (*self.header, *extra):
                fh.write(f"# {line}\n")
            frame.to_csv(fh, index=False, lineterminator="\n")
        log.info("wrote %s", name)

    def json(self, name: str, payload: dict) -> None:
        body = {"_header": self.header[0], **_jsonable(payload)}
        self.path(name).write_text(json.dumps(body, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        log.info("wrote %s", name)


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        return float(x) if math.isfinite(x) else None
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    return x


# ---------------------------------------------------------------------------
# inputs


def _timing(section) -> TimingProcess:
    return TimingProcess(**section.model_dump())


def _params(cfg: RunConfig) -> StructuralParams:
    s = cfg.simulate
    return StructuralParams(
        lambda_H=s.lambda_H,
        xi=s.xi,
        loadings={k: tuple(v) for k, v in s.loadings.items()},
        pi_1=s.pi_1,
        pi_2=s.pi_2,
        alpha_H=s.alpha_H,
        alpha_N=s.alpha_N,
        sd_u=s.sd_u,
        sd_v=s.sd_v,
        sd_eps=s.sd_eps,
        fe_unit_sd=s.fe_unit_sd,
        fe_time_sd=s.fe_time_sd,
        xi_by_cohort=dict(s.xi_by_cohort),
        lambda_by_cohort=dict(s.lambda_by_cohort),
        binary_cut=s.binary_cut,
    )


def _simulate(cfg: RunConfig):
    s = cfg.simulate
    return simulate_panel(
        _params(cfg),
        s.n_units,
        (s.t_min, s.t_max),
        seed=cfg.run.seed,
        shock_process=_timing(s.shock_process),
        adoption_process=_timing(s.adoption_process),
        n_districts=s.n_districts,
        patients_per_provider=s.patients_per_provider,
    )


def _panel(cfg: RunConfig) -> PanelDataset:
    """The configured input panel, or a fresh simulation when none is given."""
    d = cfg.data
    if d.panel is None:
        return _simulate(cfg)[0]
    if not d.outcomes:
        raise ConfigError("data.outcomes must name at least one outcome column")
    schema = Schema(
        unit=d.unit,
        period=d.period,
        anchor=d.anchor,
        adoption=d.adoption,
        outcomes=d.outcomes,
        covariates=d.covariates,
        labels=d.labels,
        weight=d.weight,
        treatment=d.treatment,
    )
    path = cfg.resolve(d.panel)
    if not path.exists():
        raise ConfigError(f"input panel {d.panel} does not exist")
    return load_panel(path, schema)


def _spec(cfg: RunConfig) -> EventStudySpec:
    e = cfg.estimate
    fields = e.model_dump(exclude={"outcomes", "ipw", "censor"})
    try:
        return EventStudySpec(**fields)
    except ValueError as exc:
        raise ConfigError(f"estimate: {exc}") from None


def _outcomes(requested, panel: PanelDataset) -> list[str]:
    if requested is None:
        return list(panel.outcomes)
    unknown = [o for o in requested if o not in panel.outcomes]
    if unknown:
        raise ConfigError(f"unknown outcomes {unknown}; panel has {list(panel.outcomes)}")
    return list(requested)


def _estimate_paths(cfg: RunConfig) -> dict[str, CoefficientPath]:
    panel = _panel(cfg)
    if cfg.estimate.censor:
        _, panel = censor_gap(panel)
    spec = _spec(cfg)
    ipw = tuple(cfg.estimate.ipw) if cfg.estimate.ipw else None
    return {m: estimate_path(panel, spec, m, ipw=ipw) for m in _outcomes(cfg.estimate.outcomes, panel)}


def _load_paths(cfg: RunConfig, directory: str | None) -> dict[str, CoefficientPath]:
    """Paths saved by ``estimate`` in ``directory``, or estimated afresh."""
    if directory is None:
        return _estimate_paths(cfg)
    base = cfg.resolve(directory)
    files = sorted(base.glob("path_*.json"))
    if not files:
        raise ConfigError(f"no path_*.json files in {directory}")
    out = {}
    for f in files:
        payload = json.loads(f.read_text(encoding="utf-8"))
        payload.pop("_header", None)
        p = CoefficientPath.from_dict(payload)
        out[p.outcome or f.stem[len("path_"):]] = p
    return out


# ---------------------------------------------------------------------------
# commands


def cmd_simulate(cfg: RunConfig, run: Run) -> None:
    panel, truth = _simulate(cfg)
    write_panel(panel, run.path("panel.csv"), header=run.header)
    write_truth(truth, run.path("truth.csv"), lead_horizon=cfg.simulate.truth_leads, header=run.header)
    log.info("simulated %d units x %d periods", panel.n_units, panel.period_range[1] - panel.period_range[0] + 1)


def cmd_estimate(cfg: RunConfig, run: Run) -> None:
    paths = _estimate_paths(cfg)
    diagnostics = {}
    for m, p in paths.items():
        table = p.table()
        run.table(f"coefficients_{m}.csv", table)
        run.table(f"plot_{m}.csv", table[["event_time", "estimate", "ci_lo", "ci_hi"]])
        run.json(f"path_{m}.json", p.to_dict())
        diagnostics[m] = {
            "estimator": p.estimator,
            "pretrend_p": p.pretrend_p,
            "leveloff_p": p.leveloff_p,
            "reference_mean": p.reference_mean,
            "reference_period": p.reference_period,
        }
    run.json("diagnostics.json", diagnostics)


def cmd_sensitivity(cfg: RunConfig, run: Run) -> None:
    s = cfg.sensitivity
    for m, p in _load_paths(cfg, s.paths).items():
        res = sensitivity(p, s.m_grid, s.window, s.weights, s.confidence, s.measure)
        extra = (
            f"method: {res.method}",
            f"target: window={res.target['window']} weights={res.target['weights']} measure={s.measure}",
        )
        run.table(f"sensitivity_{m}.csv", res.table(), extra)


def cmd_power(cfg: RunConfig, run: Run) -> None:
    s = cfg.power
    rows = []
    if s.ses is not None:
        for m, se in s.ses.items():
            r = mde(se, s.alpha, s.power)
            rows.append({"outcome": m, "window": "", "estimate": np.nan, "se": se, "multiplier": r.multiplier, "mde": r.mde})
    else:
        for m, p in _load_paths(cfg, s.paths).items():
            for lo, hi in s.windows:
                window = [t for t in p.coefficient_times if lo <= t <= hi]
                est, se = average_post_effect(p, window)
                r = mde(se, s.alpha, s.power)
                rows.append(
                    {"outcome": m, "window": f"{lo}-{hi}", "estimate": est, "se": se, "multiplier": r.multiplier, "mde": r.mde}
                )
    run.table("power.csv", pd.DataFrame(rows), (f"alpha={s.alpha} power={s.power}",))


def cmd_describe(cfg: RunConfig, run: Run) -> None:
    d = cfg.describe
    panel = _panel(cfg)
    if d.censor:
        _, panel = censor_gap(panel)
    for m in _outcomes(d.outcomes, panel):
        series = moving_average_trajectory(panel, m, d.anchor, d.window, d.span, d.group_by)
        run.table(f"trajectory_{m}.csv", pd.concat([s.frame() for s in series], ignore_index=True), (f"span={d.span}",))
    if d.provider in panel.units.columns or f"{d.provider}_id" in panel.units.columns:
        lt = loo_leniency(panel, d.provider, d.treatment, d.threshold)
        run.table("leniency.csv", lt.units)
        run.table("leniency_summary.csv", lt.summary)
    variables = d.balance_variables
    if variables is None:
        variables = [v for v in DEFAULT_BALANCE if v in panel.units.columns]
    if variables:
        run.table("balance.csv", balance_table(panel, variables, d.treatment, d.anchor, d.baseline_tau))
    write_gap_report(panel, run.path("censoring.csv"), header=run.header)
    hist = gap_histogram(panel)
    run.table("censoring_histogram.csv", pd.DataFrame({"gap_length": list(hist), "units": list(hist.values())}))
    if d.district in panel.units.columns:
        run.table("district_intake.csv", district_intake(panel, d.district))


HELP = {
    "simulate": "draw a panel and its true event-time coefficients",
    "estimate": "estimate event-time paths and pre-trend/leveling-off diagnostics",
    "sensitivity": "relative-magnitudes intervals over a grid of M",
    "power": "minimum detectable effects of post-period averages",
    "describe": "trajectories, leniency, balance, censoring and intake tables",
}

HANDLERS = {
    "simulate": cmd_simulate,
    "estimate": cmd_estimate,
    "sensitivity": cmd_sensitivity,
    "power": cmd_power,
    "describe": cmd_describe,
}


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="eventpanel", description="Staggered-adoption event-study toolkit.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, help=HELP[name])
        p.add_argument("--config", type=Path, default=None, help="INI run configuration")
        p.add_argument("--out", type=Path, required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override run.seed")
        p.add_argument("--quiet", action="store_true", help="only report errors")
        p.add_argument("--overwrite", action="store_true", help="allow writing into a non-empty directory")
    return parser


def _error(exc: Exception, command: str | None) -> int:
    code = exc.code if isinstance(exc, EventPanelError) else type(exc).__name__
    record = {"error": code, "message": str(exc), "command": command}
    sys.stderr.write(json.dumps(record, sort_keys=True) + "\n")
    return 2 if isinstance(exc, ConfigError) else 1


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(message)s", stream=sys.stderr)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = cfg.model_copy(update={"run": cfg.run.model_copy(update={"seed": args.seed})})
        out = args.out
        if out.exists() and any(out.iterdir()) and not args.overwrite:
            raise ConfigError(f"output directory {out} is not empty; pass --overwrite to reuse it")
        out.mkdir(parents=True, exist_ok=True)
        run = Run(cfg, out, args.command)
        run.json("config.resolved.json", cfg.resolved())
        HANDLERS[args.command](cfg, run)
    except (EventPanelError, ValueError, OSError) as exc:
        return _error(exc, args.command)
    return 0


if __name__ == "__main__":
    sys.exit(main())
