"""Particle filtering and fixed-lag smoothing with multi-sample prediction.

Includes exact reference filters (Kalman, grid numerical integration), the
integrated squared CDF distance used to score particle approximations, and
experiment drivers for accuracy, lag and CPU-time studies.
"""

from .model import NoiseDistribution, NoiseKind, StateSpaceModel, LinearModelMatrices, trend_model
from .datagen import SeriesSpec, generate_series, read_series_csv, write_series_csv
from .grid import Grid, GridDistribution, run_grid
from .kalman import kalman_filter, kalman_smoother, moments_to_grid
from .particle import NoiseStrategy, Resampler, RunConfig, run
from .metrics import dist, empirical_cdf

__version__ = "0.1.0"

__all__ = [
    "NoiseDistribution", "NoiseKind", "StateSpaceModel", "LinearModelMatrices", "trend_model",
    "SeriesSpec", "generate_series", "read_series_csv", "write_series_csv",
    "Grid", "GridDistribution", "run_grid",
    "kalman_filter", "kalman_smoother", "moments_to_grid",
    "NoiseStrategy", "Resampler", "RunConfig", "run",
    "dist", "empirical_cdf",
]
