"""Synthetic benchmark series and CSV I/O for observation series.

The built-in series is a shape-level stand-in for the classic piecewise
constant trend test data: it is NOT the original data set, whose values were
never published alongside the method.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .model import NoiseDistribution


class SeriesFormatError(ValueError):
    pass


@dataclass(frozen=True)
class SeriesSpec:
    length: int = 500
    # (1-based start index, level) pairs
    segment_means: tuple = ((1, 0.0), (101, 2.0), (251, -1.0), (401, 1.0))
    obs_noise: NoiseDistribution | None = field(default_factory=lambda: NoiseDistribution.gaussian(1.0))
    seed: int = 1

    def __post_init__(self):
        if self.length < 1:
            raise ValueError("length must be >= 1")
        starts = [int(s) for s, _ in self.segment_means]
        if not starts or starts[0] != 1:
            raise ValueError("first segment must start at index 1")
        if any(b <= a for a, b in zip(starts, starts[1:])):
            raise ValueError("segment start indices must be strictly increasing")
        if starts[-1] > self.length:
            raise ValueError("segment start beyond series length")

    def levels(self) -> np.ndarray:
        out = np.empty(self.length)
        bounds = [int(s) for s, _ in self.segment_means] + [self.length + 1]
        for (start, level), stop in zip(self.segment_means, bounds[1:]):
            out[int(start) - 1:stop - 1] = level
        return out


DEFAULT_SPEC = SeriesSpec()


def generate_series(spec: SeriesSpec = DEFAULT_SPEC) -> np.ndarray:
    """y_n = level(n) + w_n, deterministic in ``spec.seed``.

    ``obs_noise=None`` gives the noiseless level sequence.
    """
    levels = spec.levels()
    if spec.obs_noise is None:
        return levels
    rng = np.random.default_rng(np.random.SeedSequence(spec.seed))
    return levels + spec.obs_noise.sample(rng, spec.length)


def as_series(values) -> np.ndarray:
    ys = np.asarray(values, dtype=float).reshape(-1)
    if ys.size == 0:
        raise SeriesFormatError("empty series")
    if not np.all(np.isfinite(ys)):
        raise SeriesFormatError("series contains non-finite values")
    return ys


def write_series_csv(series, path) -> None:
    ys = as_series(series)
    # repr gives the shortest string that round-trips to the same double
    lines = ["y"] + [repr(float(v)) for v in ys]
    Path(path).write_text("\n".join(lines) + "\n")


def read_series_csv(path) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"series file not found: {path}")
    values = []
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        text = raw.strip()
        if not text:
            continue
        if lineno == 1 and text.lower() == "y":
            continue
        try:
            value = float(text)
        except ValueError:
            raise SeriesFormatError(f"{path}: line {lineno}: cannot parse {text!r} as a number") from None
        if not math.isfinite(value):
            raise SeriesFormatError(f"{path}: line {lineno}: non-finite value {text!r}")
        values.append(value)
    if not values:
        raise SeriesFormatError("empty series")
    return np.array(values)
