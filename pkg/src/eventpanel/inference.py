"""Post-estimation robustness and power.

Average post-period effects, relative-magnitudes sensitivity intervals and
minimum detectable effects, all computed from a :class:`CoefficientPath`.

The sensitivity interval is a conservative substitute for the exact
conditional test: the identified set of the target under the
relative-magnitudes restriction comes from two small linear programs, and
each endpoint is widened by a normal band built from the variance of the
affine functional attaining it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import pandas as pd
from scipy.optimize import linprog
from scipy.special import ndtri

from .errors import InfeasibleLP, MissingCoefficient
from .estimators.core import CoefficientPath

__all__ = [
    "MDEResult",
    "SensitivityResult",
    "RMBounds",
    "average_post_effect",
    "honest_rm_interval",
    "rm_bounds",
    "sensitivity",
    "mde",
    "normal_quantile",
    "M_GRID",
]

M_GRID = (0.0, 0.5, 1.0, 1.5, 2.0)
METHOD = "relative-magnitudes LP bounds + normal band (conservative)"


def normal_quantile(p: float) -> float:
    """Standard normal quantile."""
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie in (0, 1)")
    return float(ndtri(p))


def _target(path: CoefficientPath, window: Sequence[int] | None, weights: Sequence[float] | None):
    """Window event times and normalized weights of the post-period target."""
    if window is None:
        window = [t for t in path.lags() if t != path.lag_bin]
        if not window:
            window = path.lags()
    window = [int(t) for t in window]
    if not window:
        raise MissingCoefficient("empty target window")
    for t in window:
        if t not in path.coefficient_times:
            raise MissingCoefficient(f"event time {t} is not an estimated coefficient of the path")
    if weights is None:
        w = np.full(len(window), 1.0 / len(window))
    else:
        w = np.asarray(weights, dtype=float)
        if w.shape != (len(window),):
            raise ValueError("weights must match the window length")
        if w.sum() == 0:
            raise ValueError("weights sum to zero")
        w = w / w.sum()
    return window, w


def _gradient(path: CoefficientPath, window, w) -> np.ndarray:
    g = np.zeros(len(path.coefficient_times))
    for t, wt in zip(window, w):
        g[path.index(t)] += wt
    return g


def average_post_effect(
    path: CoefficientPath,
    window: Sequence[int] | None = None,
    weights: Sequence[float] | None = None,
) -> tuple[float, float]:
    """Weighted mean of post-period coefficients and its delta-method se.

    Parameters
    ----------
    path : CoefficientPath
    window : sequence of int, optional
        Event times to average. Defaults to every post coefficient
        (``tau >= 0``) except the lag endpoint bin.
    weights : sequence of float, optional
        Relative weights, normalized to sum to one. Equal by default.

    Returns
    -------
    estimate, se : float
    """
    window, w = _target(path, window, weights)
    g = _gradient(path, window, w)
    est = float(g @ path.coefficients)
    se = float(np.sqrt(max(g @ path.vcov @ g, 0.0)))
    return est, se


# ---------------------------------------------------------------------------
# relative magnitudes


@dataclass(frozen=True)
class RMBounds:
    """Identified set of the target at one M, and the functionals attaining it.

    ``grad_lo``/``grad_hi`` are the gradients (w.r.t. the path coefficients)
    of the affine functions of the estimates that equal ``set_lo``/``set_hi``.
    """

    M: float
    set_lo: float
    set_hi: float
    se_lo: float
    se_hi: float
    max_pre_step: float
    grad_lo: np.ndarray = field(repr=False)
    grad_hi: np.ndarray = field(repr=False)


def _chains(path: CoefficientPath):
    """Pre chain (leads before the reference, then the reference) and post chain.

    ``tau = -1`` is treated as transitional and left out of both chains.
    """
    ref = path.reference_period
    pre = [t for t in path.event_times if t < ref] + [ref]
    post = [t for t in path.event_times if t >= 0 and t != ref]
    return pre, post


def _pre_departure(path: CoefficientPath, pre, measure: str):
    """Largest pre-period departure and its gradient w.r.t. the coefficients."""
    k = len(path.coefficient_times)

    def unit(t):
        e = np.zeros(k)
        if t != path.reference_period:
            e[path.index(t)] = 1.0
        return e

    if measure == "differences":
        steps = [(a, b) for a, b in zip(pre[:-1], pre[1:])]
        vals = np.array([path.estimate(b) - path.estimate(a) for a, b in steps])
        i = int(np.argmax(np.abs(vals)))
        a, b = steps[i]
        return float(abs(vals[i])), np.sign(vals[i]) * (unit(b) - unit(a))
    if measure == "levels":
        leads = [t for t in pre if t != path.reference_period]
        vals = np.array([path.estimate(t) for t in leads])
        i = int(np.argmax(np.abs(vals)))
        return float(abs(vals[i])), np.sign(vals[i]) * unit(leads[i])
    raise ValueError("measure must be 'differences' or 'levels'")


def _step_lp(l: np.ndarray) -> tuple[float, float]:
    """min and max of ``l'delta`` over post paths starting from 0 with unit steps."""
    P = len(l)
    D = np.eye(P) - np.eye(P, k=-1)  # row j: delta_j - delta_{j-1}, delta_{-1} = 0
    A = np.vstack([D, -D])
    b = np.ones(2 * P)
    out = []
    for sign in (1.0, -1.0):
        res = linprog(sign * l, A_ub=A, b_ub=b, bounds=[(None, None)] * P, method="highs")
        if res.status != 0:
            raise InfeasibleLP(f"bounding program failed: {res.message}")
        out.append(sign * res.fun)
    return out[0], out[1]


def rm_bounds(
    path: CoefficientPath,
    M: float,
    window: Sequence[int] | None = None,
    weights: Sequence[float] | None = None,
    measure: str = "differences",
) -> RMBounds:
    """Identified set of the post-period target under the relative-magnitudes restriction.

    Violations ``delta`` equal the pre-period estimates before the reference
    (plug-in) and are 0 at the reference. Each post step, starting from the
    reference, is bounded in absolute value by ``M`` times the largest pre
    departure ``mbar``. The target ``theta = l'(beta_post - delta_post)``
    ranges over ``[l'beta - M*mbar*b_hi, l'beta - M*mbar*b_lo]`` with
    ``b_lo, b_hi`` the optima of a unit-step linear program.
    """
    if M < 0:
        raise ValueError("M must be nonnegative")
    V = np.asarray(path.vcov, dtype=float)
    if V.size == 0 or not np.all(np.isfinite(V)):
        raise InfeasibleLP("path covariance is empty or not finite")
    pre, post = _chains(path)
    if len(pre) < 2:
        raise InfeasibleLP("need at least two pre-period coefficients (reference included)")
    window, w = _target(path, window, weights)
    if any(t not in post for t in window):
        raise InfeasibleLP(f"target window {window} must lie in the post period {post}")
    g = _gradient(path, window, w)
    center = float(g @ path.coefficients)
    l = np.array([w[window.index(t)] if t in window else 0.0 for t in post])
    b_lo, b_hi = _step_lp(l)
    mbar, d_mbar = _pre_departure(path, pre, measure)
    grad_lo = g - M * b_hi * d_mbar
    grad_hi = g - M * b_lo * d_mbar

    def se(a):
        return float(np.sqrt(max(a @ V @ a, 0.0)))

    return RMBounds(
        M=float(M),
        set_lo=center - M * mbar * b_hi,
        set_hi=center - M * mbar * b_lo,
        se_lo=se(grad_lo),
        se_hi=se(grad_hi),
        max_pre_step=mbar,
        grad_lo=grad_lo,
        grad_hi=grad_hi,
    )


def honest_rm_interval(
    path: CoefficientPath,
    M: float,
    window: Sequence[int] | None = None,
    weights: Sequence[float] | None = None,
    confidence: float = 0.95,
    measure: str = "differences",
) -> tuple[float, float]:
    """Conservative relative-magnitudes confidence interval for the post target.

    ``[set_lo - z*se_lo, set_hi + z*se_hi]``. The endpoints at ``M`` are
    taken as the envelope with the ``M = 0`` interval. Each endpoint is
    concave (lower) or convex (upper) in ``M``, so this equals the envelope
    over all of ``[0, M]`` and intervals are nested in ``M``.
    """
    z = normal_quantile(0.5 + confidence / 2.0)
    b = rm_bounds(path, M, window, weights, measure)
    lo, hi = b.set_lo - z * b.se_lo, b.set_hi + z * b.se_hi
    if M > 0:
        b0 = rm_bounds(path, 0.0, window, weights, measure)
        lo = min(lo, b0.set_lo - z * b0.se_lo)
        hi = max(hi, b0.set_hi + z * b0.se_hi)
    return float(lo), float(hi)


@dataclass(frozen=True)
class SensitivityResult:
    m_grid: tuple[float, ...]
    intervals: tuple[tuple[float, float], ...]
    target: dict
    method: str = METHOD

    @property
    def crosses_zero(self) -> list[bool]:
        return [lo <= 0.0 <= hi for lo, hi in self.intervals]

    def table(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "M": list(self.m_grid),
                "ci_lo": [i[0] for i in self.intervals],
                "ci_hi": [i[1] for i in self.intervals],
                "crosses_zero": self.crosses_zero,
            }
        )


def sensitivity(
    path: CoefficientPath,
    m_grid: Sequence[float] = M_GRID,
    window: Sequence[int] | None = None,
    weights: Sequence[float] | None = None,
    confidence: float = 0.95,
    measure: str = "differences",
) -> SensitivityResult:
    """Relative-magnitudes intervals over a grid of M."""
    window, w = _target(path, window, weights)
    m_grid = tuple(float(m) for m in m_grid)
    intervals = tuple(honest_rm_interval(path, m, window, w, confidence, measure) for m in m_grid)
    target = {
        "outcome": path.outcome,
        "window": window,
        "weights": [float(x) for x in w],
        "confidence": confidence,
        "measure": measure,
    }
    return SensitivityResult(m_grid, intervals, target)


# ---------------------------------------------------------------------------
# power


@dataclass(frozen=True)
class MDEResult:
    se: float
    alpha: float
    power: float
    multiplier: float
    mde: float


def mde(se: float, alpha: float = 0.05, power: float = 0.80) -> MDEResult:
    """Minimum detectable effect of a two-sided level-``alpha`` test at ``power``.

    >>> round(mde(0.0179).mde, 4)
    0.0501
    """
    if se < 0:
        raise ValueError("se must be nonnegative")
    if not (0 < alpha < 1 and 0 < power < 1):
        raise ValueError("alpha and power must lie in (0, 1)")
    k = normal_quantile(1 - alpha / 2) + normal_quantile(power)
    return MDEResult(float(se), float(alpha), float(power), k, k * float(se))
