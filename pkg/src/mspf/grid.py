"""Step-function density filter and fixed-interval smoother on a fixed grid.

Densities live on the points x_i = start + i*dx, i = 0..count-1, and are
propagated through the prediction / Bayes update / backward smoothing
recursions by direct numerical integration. For the additive trend model
the prediction integral is a discrete convolution with the system-noise
kernel, evaluated either directly (O(count**2) per step) or through FFT.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.signal import fftconvolve

from .model import NoiseDistribution, StateSpaceModel

SMOOTH_FLOOR = 1e-300
# FFT round-off sits near 1e-16 of the row peak; anything below this
# fraction of the peak is treated as exact zero on the FFT path.
_FFT_NOISE = 1e-13


class ZeroLikelihoodError(ArithmeticError):
    pass


@dataclass(frozen=True)
class Grid:
    start: float = -8.0
    count: int = 6400
    dx: float = 16.0 / 6400

    def __post_init__(self):
        if self.count < 2:
            raise ValueError("grid needs at least two points")
        if not self.dx > 0:
            raise ValueError("grid spacing must be positive")

    @property
    def points(self) -> np.ndarray:
        return self.start + np.arange(self.count) * self.dx

    @property
    def stop(self) -> float:
        return self.start + (self.count - 1) * self.dx


DEFAULT_GRID = Grid()


@dataclass
class GridDistribution:
    """Cumulative distribution values D(x_i, n); ``values`` has shape (N, count)."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.atleast_2d(np.asarray(self.values, dtype=float))
        if self.values.shape[1] != self.grid.count:
            raise ValueError("row length does not match grid size")

    def __len__(self):
        return self.values.shape[0]


_MAGIC = b"MSPFGRD1"
_HEADER = struct.Struct("<8sqqdd")


def write_grid_distribution(dist: GridDistribution, path) -> None:
    """Binary dump: 40-byte little-endian header, then row-major float64 rows.

    Header fields: magic b"MSPFGRD1", N (int64), count (int64), start
    (float64), dx (float64).
    """
    n, count = dist.values.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, n, count, dist.grid.start, dist.grid.dx))
        fh.write(np.ascontiguousarray(dist.values, dtype="<f8").tobytes())


def read_grid_distribution(path) -> GridDistribution:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise ValueError(f"{path}: truncated grid dump")
    magic, n, count, start, dx = _HEADER.unpack_from(raw)
    if magic != _MAGIC:
        raise ValueError(f"{path}: not a grid distribution dump")
    body = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    if body.size != n * count:
        raise ValueError(f"{path}: expected {n * count} values, found {body.size}")
    return GridDistribution(Grid(start, count, dx), body.reshape(n, count).astype(float))


def noise_kernel(noise: NoiseDistribution, grid: Grid) -> np.ndarray:
    """q evaluated at the offsets k*dx, k = -(count-1)..(count-1)."""
    offsets = np.arange(-(grid.count - 1), grid.count) * grid.dx
    return noise.pdf(offsets)


def _convolve(row, kernel, count, method):
    if method == "direct":
        full = np.convolve(row, kernel)
    elif method == "fft":
        full = fftconvolve(row, kernel)
    else:
        raise ValueError(f"unknown convolution method {method!r}")
    out = full[count - 1:2 * count - 1]
    if method == "fft":
        out = np.where(out > _FFT_NOISE * out.max(), out, 0.0)
    return out


def _normalize(row, dx):
    mass = row.sum() * dx
    if not mass > 0:
        raise ZeroLikelihoodError("zero likelihood row")
    return row / mass


def grid_predict(prior, sys_noise: NoiseDistribution, grid: Grid = DEFAULT_GRID,
                 method: str = "direct", kernel=None) -> np.ndarray:
    """One-step prediction for x_n = x_{n-1} + v_n.

    Mass carried past the grid ends is dropped and the row renormalised.
    """
    if kernel is None:
        kernel = noise_kernel(sys_noise, grid)
    pred = _convolve(np.asarray(prior, dtype=float), kernel, grid.count, method) * grid.dx
    return _normalize(pred, grid.dx)


def grid_filter_update(pred, y: float, obs_noise: NoiseDistribution, grid: Grid = DEFAULT_GRID,
                       observation=None) -> np.ndarray:
    h = grid.points if observation is None else observation(grid.points)
    post = obs_noise.pdf(y - h) * pred
    return _normalize(post, grid.dx)


def grid_smooth(filtered, predicted, sys_noise: NoiseDistribution, grid: Grid = DEFAULT_GRID,
                method: str = "direct", kernel=None) -> np.ndarray:
    """Backward fixed-interval recursion over all rows.

    ``predicted[n]`` is the one-step prediction density for row n. Predicted
    values at or below 1e-300 drop out of the ratio sum.
    """
    filtered = np.asarray(filtered, dtype=float)
    predicted = np.asarray(predicted, dtype=float)
    if kernel is None:
        kernel = noise_kernel(sys_noise, grid)
    # sum_j ratio_j q(x_j - x_i) is a correlation: convolve with the reversed kernel
    rev = kernel[::-1]
    smoothed = np.empty_like(filtered)
    smoothed[-1] = filtered[-1]
    for n in range(len(filtered) - 2, -1, -1):
        p_next = predicted[n + 1]
        ratio = np.zeros_like(p_next)
        ok = p_next > SMOOTH_FLOOR
        ratio[ok] = smoothed[n + 1][ok] / p_next[ok]
        back = _convolve(ratio, rev, grid.count, method) * grid.dx
        smoothed[n] = _normalize(filtered[n] * back, grid.dx)
    return smoothed


def initial_density(model: StateSpaceModel, grid: Grid = DEFAULT_GRID, uniform: bool = False) -> np.ndarray:
    if uniform:
        row = np.ones(grid.count)
    else:
        row = model.initial.pdf(grid.points - model.initial_mean)
    return _normalize(row, grid.dx)


def density_to_cdf(rows, dx: float) -> np.ndarray:
    """CDF at the grid points: full cells below x_i plus half of x_i's own cell.

    The density value p_i covers [x_i - dx/2, x_i + dx/2); a plain inclusive
    prefix sum would give the CDF at x_i + dx/2 instead of at x_i.
    """
    rows = np.asarray(rows, dtype=float)
    return (np.cumsum(rows, axis=-1) - 0.5 * rows) * dx


@dataclass
class GridRun:
    predicted: np.ndarray
    filtered: np.ndarray
    smoothed: np.ndarray | None
    grid: Grid

    @property
    def filter_distribution(self) -> GridDistribution:
        return GridDistribution(self.grid, density_to_cdf(self.filtered, self.grid.dx))

    @property
    def smoother_distribution(self) -> GridDistribution | None:
        if self.smoothed is None:
            return None
        return GridDistribution(self.grid, density_to_cdf(self.smoothed, self.grid.dx))


def run_grid_densities(model: StateSpaceModel, ys, want_smoother: bool = True, grid: Grid = DEFAULT_GRID,
                       method: str = "direct", uniform_initial: bool = False) -> GridRun:
    if not model.additive_trend:
        raise ValueError("grid filter supports the additive trend model only")
    ys = np.asarray(ys, dtype=float)
    kernel = noise_kernel(model.system_noise, grid)
    n_obs = len(ys)
    predicted = np.empty((n_obs, grid.count))
    filtered = np.empty((n_obs, grid.count))
    row = initial_density(model, grid, uniform=uniform_initial)
    for n, y in enumerate(ys):
        predicted[n] = grid_predict(row, model.system_noise, grid, method, kernel)
        row = filtered[n] = grid_filter_update(predicted[n], y, model.obs_noise, grid)
    smoothed = None
    if want_smoother and n_obs:
        smoothed = grid_smooth(filtered, predicted, model.system_noise, grid, method, kernel)
    return GridRun(predicted, filtered, smoothed, grid)


def run_grid(model: StateSpaceModel, ys, want_smoother: bool = True, grid: Grid = DEFAULT_GRID,
             method: str = "direct", uniform_initial: bool = False):
    """Filter (and optionally smoother) CDF rows for a scalar additive model.

    Returns ``(filter_distribution, smoother_distribution_or_None)``.
    """
    res = run_grid_densities(model, ys, want_smoother, grid, method, uniform_initial)
    return res.filter_distribution, res.smoother_distribution
