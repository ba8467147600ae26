"""Least squares with absorbed high-dimensional fixed effects.

Fixed effects are swept out by alternating projections: each sweep subtracts
(weighted) group means for every grouping in turn, until the largest
absolute update in a sweep drops below ``tol``. The demeaned design is then
solved by ordinary least squares, with a CR1 cluster-robust sandwich and Wald
tests on top.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from scipy import stats
from scipy.sparse.csgraph import connected_components

from .errors import DegenerateRestriction, EmptySample, NoConvergence, SingleCluster

__all__ = [
    "factorize",
    "demean",
    "drop_singletons",
    "absorbed_dof",
    "RegressionResult",
    "WaldResult",
    "ols",
    "cluster_vcov",
    "fe_ols",
    "wald_test",
]

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 10_000


def factorize(labels) -> tuple[np.ndarray, int]:
    """Integer codes (sorted-label order) and level count for a label array."""
    labels = np.asarray(labels)
    if labels.dtype.kind == "O":
        labels = labels.astype(str)
    _, codes = np.unique(labels, return_inverse=True)
    codes = codes.ravel()
    return codes, int(codes.max()) + 1 if len(codes) else 0


class _Grouping:
    __slots__ = ("codes", "n_levels", "indicator", "wsum")

    def __init__(self, labels, weights):
        self.codes, self.n_levels = factorize(labels)
        n = len(self.codes)
        self.indicator = sp.csr_matrix(
            (np.ones(n), (self.codes, np.arange(n))), shape=(self.n_levels, n)
        )
        self.wsum = self.indicator @ weights

    def means(self, wx: np.ndarray) -> np.ndarray:
        sums = self.indicator @ wx
        with np.errstate(invalid="ignore", divide="ignore"):
            out = sums / self.wsum.reshape((-1,) + (1,) * (wx.ndim - 1))
        return np.nan_to_num(out)


def _demean(values, fe_groups, weights=None, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER):
    x = np.array(values, dtype=float, copy=True)
    n = x.shape[0]
    if not fe_groups:
        raise ValueError("demean needs at least one grouping")
    if tol <= 0:
        raise ValueError("tol must be positive")
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    groupings = [_Grouping(g, w) for g in fe_groups]
    wcol = w.reshape((-1,) + (1,) * (x.ndim - 1))
    update = np.inf
    for it in range(1, max_iter + 1):
        update = 0.0
        for g in groupings:
            m = g.means(wcol * x)
            if m.size:
                update = max(update, float(np.abs(m).max()))
            x -= m[g.codes]
        if update < tol:
            return x, it
    raise NoConvergence(max_iter, update)


def demean(values, fe_groups: Sequence, weights=None, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER) -> np.ndarray:
    """Project ``values`` (vector or column-stacked matrix) off the span of all group indicators.

    Parameters
    ----------
    values : array-like, shape (n,) or (n, k)
    fe_groups : sequence of label arrays, each of length n
    weights : optional nonnegative weights defining the inner product
    tol : stop once the largest absolute update in a full sweep is below ``tol``
    max_iter : maximum number of sweeps before :class:`NoConvergence`
    """
    return _demean(values, fe_groups, weights, tol, max_iter)[0]


def drop_singletons(fe_groups: Sequence) -> np.ndarray:
    """Boolean mask of observations kept after iteratively removing singleton groups."""
    if not fe_groups:
        return np.ones(0, dtype=bool)
    n = len(fe_groups[0])
    keep = np.ones(n, dtype=bool)
    codes = [factorize(g)[0] for g in fe_groups]
    while True:
        changed = False
        for c in codes:
            counts = np.bincount(c[keep], minlength=c.max() + 1 if n else 0)
            single = keep & (counts[c] == 1)
            if single.any():
                keep &= ~single
                changed = True
        if not changed:
            return keep


def absorbed_dof(fe_groups: Sequence) -> int:
    """Parameters absorbed by the fixed effects.

    Sum of level counts, minus the connected components of the bipartite
    graph formed by the first two groupings, minus one per further grouping.
    Exact redundancy detection beyond two groupings is not attempted.
    """
    if not fe_groups:
        return 0
    coded = [factorize(g) for g in fe_groups]
    total = sum(n for _, n in coded)
    if len(coded) == 1:
        return total
    (c1, n1), (c2, n2) = coded[0], coded[1]
    graph = sp.coo_matrix((np.ones(len(c1)), (c1, c2 + n1)), shape=(n1 + n2, n1 + n2))
    n_comp, _ = connected_components(graph, directed=False)
    return total - n_comp - (len(coded) - 2)


@dataclass(frozen=True)
class RegressionResult:
    """Estimated coefficients with covariance and bookkeeping.

    ``design`` keeps the (demeaned) columns actually used, so clustered
    covariances can be recomputed later.
    """

    names: tuple[str, ...]
    coefficients: np.ndarray
    vcov: np.ndarray
    residuals: np.ndarray
    n_obs: int
    dof_residual: int
    cluster_count: int = 0
    iterations: int = 0
    dropped: tuple[str, ...] = ()
    n_singletons: int = 0
    vcov_type: str = "classical"
    design: np.ndarray = field(default=None, repr=False)
    weights: np.ndarray = field(default=None, repr=False)
    sample: np.ndarray = field(default=None, repr=False)

    @property
    def ses(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.vcov), 0.0, None))

    def coef(self, name: str) -> float:
        return float(self.coefficients[self.names.index(name)])

    def se(self, name: str) -> float:
        return float(self.ses[self.names.index(name)])


def _independent_columns(X: np.ndarray, rtol: float, ref_norms=None) -> np.ndarray:
    """Keep columns in order, dropping any that lie in the span of earlier ones.

    ``ref_norms`` are the column norms before fixed effects were swept out, so
    columns the fixed effects absorb are recognized as dropped too.
    """
    k = X.shape[1]
    if k == 0:
        return np.zeros(0, dtype=bool)
    norms = np.linalg.norm(X, axis=0) if ref_norms is None else np.asarray(ref_norms, dtype=float)
    keep = norms > 0
    while True:
        idx = np.flatnonzero(keep)
        if len(idx) == 0:
            return keep
        R = np.linalg.qr(X[:, idx], mode="r")
        diag = np.zeros(len(idx))
        m = min(R.shape)
        diag[:m] = np.abs(np.diag(R))[:m]
        bad = np.flatnonzero(diag <= rtol * norms[idx])
        if len(bad) == 0:
            return keep
        # first dependent column only; later ones are re-checked without it
        keep[idx[bad[0]]] = False


def ols(
    X,
    y,
    weights=None,
    names: Sequence[str] | None = None,
    absorbed: int = 0,
    rank_rtol: float = 1e-7,
    ref_norms=None,
) -> RegressionResult:
    """Weighted least squares on an already-demeaned design.

    Columns in the span of earlier columns are dropped (first one kept) and
    listed in ``dropped``. The returned covariance is the classical
    ``s^2 (X'WX)^-1``; use :func:`cluster_vcov` for clustered inference.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=float).ravel()
    n, k = X.shape
    if names is None:
        names = [f"x{j}" for j in range(k)]
    names = list(names)
    if n == 0:
        raise EmptySample("no observations")
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    if (w < 0).any():
        raise ValueError("weights must be nonnegative")
    sw = np.sqrt(w)
    Xw = X * sw[:, None]
    keep = _independent_columns(Xw, rank_rtol, ref_norms)
    Xk = X[:, keep]
    kept_names = tuple(n_ for n_, k_ in zip(names, keep) if k_)
    dropped = tuple(n_ for n_, k_ in zip(names, keep) if not k_)
    if Xk.shape[1] > n:
        raise EmptySample(f"{n} observations for {Xk.shape[1]} columns")
    if Xk.shape[1]:
        beta = np.linalg.lstsq(Xw[:, keep], y * sw, rcond=None)[0]
    else:
        beta = np.zeros(0)
    resid = y - Xk @ beta
    dof = n - Xk.shape[1] - absorbed
    if Xk.shape[1]:
        bread = np.linalg.inv(Xw[:, keep].T @ Xw[:, keep])
        s2 = float(w @ resid**2) / dof if dof > 0 else np.nan
        vcov = s2 * bread
    else:
        vcov = np.zeros((0, 0))
    return RegressionResult(
        names=kept_names,
        coefficients=beta,
        vcov=_symmetrize(vcov),
        residuals=resid,
        n_obs=n,
        dof_residual=dof,
        dropped=dropped,
        design=Xk,
        weights=w,
    )


def _symmetrize(m: np.ndarray) -> np.ndarray:
    return (m + m.T) / 2.0


def cluster_vcov(result: RegressionResult, clusters, small_sample: bool = True) -> np.ndarray:
    """CR1 sandwich: ``c * B^-1 (sum_g s_g s_g') B^-1`` with ``s_g`` the summed scores of cluster g.

    ``c = G/(G-1) * (n-1)/(n-k)`` where ``k = n_obs - dof_residual``.
    """
    X, w, e = result.design, result.weights, result.residuals
    codes, G = factorize(clusters)
    if len(codes) != result.n_obs:
        raise ValueError("cluster labels must align with the estimation sample")
    if G < 2:
        raise SingleCluster(f"clustered covariance needs at least 2 clusters, got {G}")
    k_cols = X.shape[1]
    if k_cols == 0:
        return np.zeros((0, 0))
    scores = X * (w * e)[:, None]
    S = sp.csr_matrix((np.ones(len(codes)), (codes, np.arange(len(codes)))), shape=(G, len(codes))) @ scores
    meat = S.T @ S
    bread = np.linalg.inv((X * w[:, None]).T @ X)
    V = bread @ meat @ bread
    if small_sample:
        n = result.n_obs
        k = n - result.dof_residual
        V = V * (G / (G - 1)) * ((n - 1) / (n - k))
    return _symmetrize(V)


def fe_ols(
    y,
    X,
    fe_groups: Sequence = (),
    weights=None,
    clusters=None,
    names: Sequence[str] | None = None,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    singletons: bool = True,
    small_sample: bool = True,
) -> RegressionResult:
    """Regress ``y`` on ``X`` absorbing ``fe_groups``, optionally clustering.

    Rows with a missing response or regressor are dropped, then singleton
    groups (iteratively), then the remaining data are demeaned and solved.
    ``result.sample`` marks the rows used.
    """
    y = np.asarray(y, dtype=float).ravel()
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n = len(y)
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    sample = np.isfinite(y) & np.isfinite(X).all(axis=1) & (w > 0)
    fe_groups = [np.asarray(g) for g in fe_groups]
    n_single = 0
    if fe_groups and singletons:
        keep = drop_singletons([g[sample] for g in fe_groups])
        idx = np.flatnonzero(sample)
        n_single = int((~keep).sum())
        sample[idx[~keep]] = False
    if not sample.any():
        raise EmptySample("no usable observations after dropping missing values and singletons")
    ys, Xs, ws = y[sample], X[sample], w[sample]
    groups = [g[sample] for g in fe_groups]
    iterations = 0
    absorbed = 0
    ref_norms = None
    if groups:
        ref_norms = np.linalg.norm(Xs * np.sqrt(ws)[:, None], axis=0)
        both, iterations = _demean(np.column_stack([ys, Xs]), groups, ws, tol, max_iter)
        ys, Xs = both[:, 0], both[:, 1:]
        absorbed = absorbed_dof(groups)
    res = ols(Xs, ys, ws, names=names, absorbed=absorbed, ref_norms=ref_norms)
    res = replace(res, iterations=iterations, n_singletons=n_single, sample=sample)
    if clusters is not None:
        cl = np.asarray(clusters)[sample]
        res = replace(
            res,
            vcov=cluster_vcov(res, cl, small_sample=small_sample),
            cluster_count=factorize(cl)[1],
            vcov_type="cluster",
        )
    return res


@dataclass(frozen=True)
class WaldResult:
    statistic: float
    df: int
    p_value: float


def wald_test(result, R, r=None, atol: float = 1e-12) -> WaldResult:
    """Chi-square Wald test of ``R beta = r``.

    ``result`` is anything exposing ``coefficients`` and ``vcov``. A singular
    ``R V R'`` is handled with a pseudo-inverse and ``df`` is its rank. When
    every restriction holds to within ``atol`` (scaled by the coefficient
    magnitude) the statistic is exactly zero.
    """
    beta = np.asarray(result.coefficients, dtype=float)
    V = np.asarray(result.vcov, dtype=float)
    R = np.atleast_2d(np.asarray(R, dtype=float))
    if R.shape[1] != len(beta):
        raise DegenerateRestriction(f"R has {R.shape[1]} columns for {len(beta)} coefficients")
    if R.shape[0] > len(beta) or R.shape[0] == 0:
        raise DegenerateRestriction(f"{R.shape[0]} restrictions on {len(beta)} coefficients")
    r = np.zeros(R.shape[0]) if r is None else np.atleast_1d(np.asarray(r, dtype=float))
    dev = R @ beta - r
    A = _symmetrize(R @ V @ R.T)
    rank = int(np.linalg.matrix_rank(A, hermitian=True)) if np.any(A) else 0
    scale = max(1.0, float(np.abs(beta).max()) if len(beta) else 1.0)
    if np.abs(dev).max() <= atol * scale:
        return WaldResult(0.0, max(rank, 1), 1.0)
    if rank == 0:
        raise DegenerateRestriction("R V R' is zero: restrictions carry no sampling variance")
    stat = float(dev @ np.linalg.pinv(A, hermitian=True) @ dev)
    return WaldResult(stat, rank, float(stats.chi2.sf(stat, rank)))
