"""Empirical CDFs of particle sets and the integrated squared CDF distance."""

from __future__ import annotations

import numpy as np

from . import kernels
from .grid import Grid, GridDistribution


def empirical_cdf(particles, grid: Grid) -> np.ndarray:
    """Row of #{j : x_j <= x_i} / m on the grid points."""
    xs = np.sort(np.asarray(particles, dtype=float).reshape(-1))
    return np.searchsorted(xs, grid.points, side="right") / xs.size


def empirical_distribution(snapshots, grid: Grid) -> GridDistribution:
    return GridDistribution(grid, np.array([empirical_cdf(row, grid) for row in snapshots]))


def dist_per_time(true_d: GridDistribution, est_d: GridDistribution) -> np.ndarray:
    if true_d.values.shape != est_d.values.shape:
        raise ValueError(f"shape mismatch: {true_d.values.shape} vs {est_d.values.shape}")
    if true_d.grid != est_d.grid:
        raise ValueError("distributions are defined on different grids")
    diff = true_d.values - est_d.values
    return np.einsum("ij,ij->i", diff, diff) * true_d.grid.dx


def dist(true_d: GridDistribution, est_d: GridDistribution) -> float:
    """sum_n sum_i (D(x_i, n) - D_hat(x_i, n))**2 * dx."""
    return float(dist_per_time(true_d, est_d).sum())


class ParticleScorer:
    """Accumulates the distance of particle snapshots to a fixed truth.

    Used as a ``run`` callback so snapshots never have to be stored.
    """

    def __init__(self, truth: GridDistribution, kern=None):
        self.truth = np.ascontiguousarray(truth.values)
        self.points = truth.grid.points
        self.dx = truth.grid.dx
        self.kern = kern or kernels.default
        self.per_time = np.zeros(len(truth))

    def __call__(self, t: int, particles) -> None:
        xs = np.sort(particles)
        self.per_time[t - 1] = self.kern.ecdf_sq_distance(xs, self.truth[t - 1], self.points, self.dx)

    @property
    def total(self) -> float:
        return float(self.per_time.sum())


class LagScorer:
    """Scores every fixed lag 0..max_lag from a single max-lag run.

    At step n, history row a is exactly what a lag-a smoother would emit
    for time n - a, because the forward filter and the resampling indices
    do not depend on the lag. At the end of the series a lag-d smoother
    emits the rows it still holds, so time t is scored with age
    min(d, N - t).
    """

    def __init__(self, truth: GridDistribution, max_lag: int, kern=None):
        self.truth = np.ascontiguousarray(truth.values)
        self.points = truth.grid.points
        self.dx = truth.grid.dx
        self.kern = kern or kernels.default
        self.max_lag = int(max_lag)
        self.n_obs = len(truth)
        # err[t-1, a]: distance of the age-a row for time t
        self.err = np.full((self.n_obs, self.max_lag + 1), np.nan)

    def __call__(self, n: int, history) -> None:
        ages = np.arange(min(self.max_lag, n - 1) + 1)
        times = n - ages
        rows = np.sort(history.rows[: ages.size], axis=1)
        vals = self.kern.ecdf_sq_distance_rows(rows, self.truth, (times - 1).astype(np.intp),
                                               self.points, self.dx)
        self.err[times - 1, ages] = vals

    def per_lag(self) -> np.ndarray:
        t = np.arange(1, self.n_obs + 1)
        out = np.empty(self.max_lag + 1)
        for d in range(self.max_lag + 1):
            age = np.minimum(d, self.n_obs - t)
            out[d] = self.err[t - 1, age].sum()
        return out
