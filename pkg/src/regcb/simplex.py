"""Probability-simplex utilities shared across the package."""

import numpy as np

SIMPLEX_ATOL = 1e-12


def check_simplex(p, atol=1e-9):
    """Validate and return ``p`` as a point of the unit simplex.

    Raises ValueError if entries are negative or do not sum to one.
    """
    p = np.asarray(p, dtype=float)
    if p.ndim != 1:
        raise ValueError("simplex point must be a 1-d vector")
    if np.any(p < -atol):
        raise ValueError(f"simplex point has negative entries: {p}")
    s = p.sum()
    if abs(s - 1.0) > max(atol, SIMPLEX_ATOL * p.size):
        raise ValueError(f"simplex point sums to {s}, expected 1")
    return p


def uniform(k):
    """Barycenter of the K-simplex."""
    return np.full(k, 1.0 / k)


def project_to_simplex(v):
    """Euclidean projection onto the unit simplex.

    Sort-based exact algorithm, O(K log K).
    """
    v = np.asarray(v, dtype=float)
    k = v.size
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    idx = np.arange(1, k + 1)
    cond = u - css / idx > 0
    rho = idx[cond][-1]
    theta = css[rho - 1] / rho
    return np.maximum(v - theta, 0.0)
