"""Independent reference implementations used as test oracles."""

import numpy as np


def dummies(labels):
    labels = np.asarray(labels)
    levels = np.unique(labels)
    return (labels[:, None] == levels[None, :]).astype(float)


def dummy_ols(y, X, groups, weights=None):
    """Least squares with explicit dummy columns; returns (beta, residuals, rank of FE block)."""
    n = len(y)
    w = np.ones(n) if weights is None else weights
    D = np.column_stack([dummies(g) for g in groups]) if groups else np.zeros((n, 0))
    Z = np.column_stack([X, D])
    sw = np.sqrt(w)
    coef = np.linalg.lstsq(Z * sw[:, None], y * sw, rcond=None)[0]
    resid = y - Z @ coef
    fe_rank = np.linalg.matrix_rank(D) if D.shape[1] else 0
    return coef[: X.shape[1]], resid, fe_rank


def identified(X, groups):
    """Whether X keeps full column rank after partialling out the dummies."""
    n = X.shape[0]
    D = np.column_stack([dummies(g) for g in groups]) if groups else np.zeros((n, 0))
    return np.linalg.matrix_rank(np.column_stack([X, D])) == X.shape[1] + (np.linalg.matrix_rank(D) if D.shape[1] else 0)


def cluster_sandwich(X, e, clusters, k_total):
    """CR1 covariance from explicit per-cluster score sums (loops, no matrix tricks)."""
    n, k = X.shape
    bread = np.linalg.inv(X.T @ X)
    meat = np.zeros((k, k))
    ids = sorted(set(clusters.tolist()))
    for g in ids:
        s = np.zeros(k)
        for i in range(n):
            if clusters[i] == g:
                s += X[i] * e[i]
        meat += np.outer(s, s)
    G = len(ids)
    c = G / (G - 1) * (n - 1) / (n - k_total)
    return c * bread @ meat @ bread


def normal_equations(X, y):
    return np.linalg.solve(X.T @ X, X.T @ y)
