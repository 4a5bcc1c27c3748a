"""Kalman filter and fixed-interval smoother for linear-Gaussian models."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg, special

from .grid import Grid, GridDistribution
from .model import LinearModelMatrices


@dataclass
class MomentSequence:
    means: np.ndarray        # (N, k)
    covariances: np.ndarray  # (N, k, k)
    tag: str                 # "predicted", "filtered" or "smoothed"

    def __len__(self):
        return self.means.shape[0]

    @property
    def scalar_means(self) -> np.ndarray:
        return self.means[:, 0]

    @property
    def scalar_variances(self) -> np.ndarray:
        return self.covariances[:, 0, 0]


def kalman_filter(model: LinearModelMatrices, ys):
    """Returns ``(predicted, filtered, log_likelihood)``."""
    ys = np.asarray(ys, dtype=float).reshape(-1)
    F, G, H, Q, R = model.F, model.G, model.H, model.Q, model.R
    k = model.state_dim
    GQG = G @ Q @ G.T
    n_obs = len(ys)
    xp = np.empty((n_obs, k))
    Vp = np.empty((n_obs, k, k))
    xf = np.empty((n_obs, k))
    Vf = np.empty((n_obs, k, k))
    x, V = model.x0_mean.copy(), model.V0.copy()
    eye = np.eye(k)
    loglik = 0.0
    for n, y in enumerate(ys):
        x = F @ x
        V = F @ V @ F.T + GQG
        xp[n], Vp[n] = x, V
        s = (H @ V @ H.T + R)[0, 0]
        if not s > 0:
            raise np.linalg.LinAlgError(f"singular innovation variance at step {n + 1}")
        K = (V @ H.T) / s
        e = y - (H @ x)[0]
        x = x + K[:, 0] * e
        V = (eye - K @ H) @ V
        V = 0.5 * (V + V.T)
        xf[n], Vf[n] = x, V
        loglik -= 0.5 * (np.log(2.0 * np.pi * s) + e * e / s)
    return MomentSequence(xp, Vp, "predicted"), MomentSequence(xf, Vf, "filtered"), loglik


def _smoother_gain(Vf_n, F, Vp_next):
    k = Vp_next.shape[0]
    if k == 1:
        return Vf_n * F[0, 0] / Vp_next[0, 0]
    try:
        factor = linalg.cho_factor(Vp_next)
    except linalg.LinAlgError:
        Vp_next = Vp_next + 1e-12 * np.trace(Vp_next) * np.eye(k)
        factor = linalg.cho_factor(Vp_next)
    # A = Vf F' Vp^{-1}  <=>  A' = Vp^{-1} F Vf
    return linalg.cho_solve(factor, F @ Vf_n).T


def kalman_smoother(model: LinearModelMatrices, predicted: MomentSequence, filtered: MomentSequence) -> MomentSequence:
    xs = filtered.means.copy()
    Vs = filtered.covariances.copy()
    for n in range(len(filtered) - 2, -1, -1):
        A = _smoother_gain(filtered.covariances[n], model.F, predicted.covariances[n + 1])
        xs[n] = filtered.means[n] + A @ (xs[n + 1] - predicted.means[n + 1])
        V = filtered.covariances[n] + A @ (Vs[n + 1] - predicted.covariances[n + 1]) @ A.T
        Vs[n] = 0.5 * (V + V.T)
    return MomentSequence(xs, Vs, "smoothed")


def moments_to_grid(moments: MomentSequence, grid: Grid) -> GridDistribution:
    """Gaussian CDF of each time step evaluated on the grid points."""
    if moments.means.shape[1] != 1:
        raise ValueError("moments_to_grid needs a scalar state")
    x = grid.points[None, :]
    mean = moments.scalar_means[:, None]
    var = np.maximum(moments.scalar_variances, 0.0)[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        z = (x - mean) / np.sqrt(var)
        values = np.where(var > 0, special.ndtr(z), (x >= mean).astype(float))
    return GridDistribution(grid, values)
