"""Cubic bin grid over the unit cube and per-bin averages."""

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class BinGrid:
    """Partition of [0,1]^d into B^d half-open cubic cells.

    The right/top boundary folds into the last cell so the index map is
    total on the closed cube.
    """

    B: int
    d: int

    def __post_init__(self):
        if self.B < 1 or self.d < 1:
            raise ValueError("B and d must be positive integers")

    @property
    def n_bins(self):
        return self.B ** self.d

    @property
    def cell_volume(self):
        return self.B ** (-self.d)

    @property
    def cell_diameter(self):
        return math.sqrt(self.d) / self.B

    def index(self, x):
        """Row-major bin index of a point of [0,1]^d."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if x.size != self.d:
            raise ValueError(f"point has {x.size} coordinates, expected {self.d}")
        if np.any(x < 0) or np.any(x > 1):
            raise ValueError(f"context {x} outside [0,1]^d")
        cells = np.minimum((x * self.B).astype(int), self.B - 1)
        return int(np.dot(cells, self.B ** np.arange(self.d)))

    def indices(self, xs):
        """Vectorized bin indices for an (n, d) array of points."""
        xs = np.asarray(xs, dtype=float)
        if np.any(xs < 0) or np.any(xs > 1):
            raise ValueError("contexts outside [0,1]^d")
        cells = np.minimum((xs * self.B).astype(int), self.B - 1)
        return cells @ (self.B ** np.arange(self.d))

    def cell_coords(self, b):
        coords = []
        for _ in range(self.d):
            coords.append(b % self.B)
            b //= self.B
        return np.array(coords)

    def lower_corner(self, b):
        return self.cell_coords(b) / self.B

    def center(self, b):
        return (self.cell_coords(b) + 0.5) / self.B

    def quad_nodes(self, b, nodes_per_axis):
        """Midpoint-rule nodes of bin ``b``, an (G^d, d) array."""
        lo = self.lower_corner(b)
        offsets = (np.arange(nodes_per_axis) + 0.5) / (nodes_per_axis * self.B)
        axes = [lo[i] + offsets for i in range(self.d)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)


def select_bin_count(T, beta, d, regime, theta_constant=1.0):
    """Bins per axis for the given horizon, smoothness and rate regime.

    Slow regime balances against (T/log T), fast and intermediate against
    (T/log^2 T); the leading constant defaults to 1 and is exposed as a
    multiplier.
    """
    if T <= 3:
        return 1
    if not 0 < beta <= 1:
        raise ValueError("beta must be in (0, 1]")
    if regime == "slow":
        base = T / math.log(T)
    elif regime in ("fast", "intermediate"):
        base = T / math.log(T) ** 2
    else:
        raise ValueError(f"unknown regime '{regime}'")
    return max(1, round(theta_constant * base ** (1.0 / (2 * beta + d))))


def bin_average(grid, b, fn, nodes_per_axis=32):
    """Midpoint-quadrature average of a scalar function over bin ``b``."""
    nodes = grid.quad_nodes(b, nodes_per_axis)
    return float(np.mean([fn(x) for x in nodes]))


def bin_average_lambda(grid, b, lam, nodes_per_axis=32):
    """Average of the regularization weight over a bin; exact for constants."""
    if lam.is_constant:
        return lam.params[0]
    return bin_average(grid, b, lam, nodes_per_axis)


def bin_average_means(grid, b, env, nodes_per_axis=32):
    """K-vector of per-arm mean losses averaged over bin ``b``."""
    nodes = grid.quad_nodes(b, nodes_per_axis)
    return env.mean_matrix(nodes).mean(axis=0)
