"""Replicated accuracy, lag and CPU-time experiments, plus CSV tables.

Replication r of an experiment with base seed s always uses the random
stream ``make_rng(s, r)``, so cells that differ only in multiplicity or
noise strategy are paired by seed.
"""

from __future__ import annotations

import math
import os
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .grid import DEFAULT_GRID, Grid, GridDistribution, read_grid_distribution, run_grid
from .kalman import kalman_filter, kalman_smoother, moments_to_grid
from .metrics import LagScorer, ParticleScorer
from .model import NoiseKind, StateSpaceModel, trend_model, DEFAULT_INITIAL_VAR
from .particle import NoiseStrategy, RunConfig, run


def nsim_for(m: int) -> int:
    """Desk-scale replication counts (the original study used up to 1000)."""
    if m <= 1_000:
        return 100
    if m <= 10_000:
        return 25
    return 10


def worker_count(requested: int | None = None) -> int:
    cap = os.environ.get("MSPF_WORKERS")
    n = requested if requested is not None else (int(cap) if cap else 1)
    if cap:
        n = min(n, int(cap))
    return max(1, n)


@dataclass(frozen=True)
class ExperimentConfig:
    noise: str = "cauchy"
    tau2: float = 0.01
    sigma2: float = 1.0
    initial_var: float = DEFAULT_INITIAL_VAR
    m_values: tuple = (1_000,)
    multiplicities: tuple = (1,)
    lags: tuple = (0,)
    strategies: tuple = ("random",)
    resampler: str = "systematic"
    nsim: int | None = None
    base_seed: int = 1
    truth_source: str = "auto"     # auto, kalman, grid, cached
    truth_filter_path: str | None = None
    truth_smoother_path: str | None = None
    grid_method: str = "fft"
    target: str = "filter"          # filter or smoother
    workers: int | None = None
    backend: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "noise", NoiseKind.parse(self.noise).value)
        for name in ("m_values", "multiplicities", "lags", "strategies"):
            vals = tuple(getattr(self, name))
            if not vals:
                raise ValueError(f"{name} must be nonempty")
            object.__setattr__(self, name, vals)
        if self.nsim is not None and self.nsim < 1:
            raise ValueError("nsim must be >= 1")
        if self.target not in ("filter", "smoother"):
            raise ValueError("target must be 'filter' or 'smoother'")
        if self.truth_source not in ("auto", "kalman", "grid", "cached"):
            raise ValueError(f"unknown truth source {self.truth_source!r}")

    def model(self) -> StateSpaceModel:
        return trend_model(self.noise, self.tau2, self.sigma2, self.initial_var)

    def replications(self, m: int) -> int:
        return self.nsim if self.nsim is not None else nsim_for(m)


@dataclass
class Truth:
    filter: GridDistribution
    smoother: GridDistribution | None
    source: str


def compute_truth(config: ExperimentConfig, ys, need_smoother: bool = True, grid: Grid = DEFAULT_GRID) -> Truth:
    """Reference distributions: Kalman for Gaussian models, grid filter otherwise."""
    source = config.truth_source
    if source == "auto":
        source = "kalman" if config.noise == NoiseKind.GAUSSIAN.value else "grid"
    model = config.model()
    if source == "kalman":
        if config.noise != NoiseKind.GAUSSIAN.value:
            raise ValueError("Kalman truth requires the Gaussian noise model")
        lin = model.linearization()
        pred, filt, _ = kalman_filter(lin, ys)
        smooth = kalman_smoother(lin, pred, filt) if need_smoother else None
        return Truth(moments_to_grid(filt, grid), moments_to_grid(smooth, grid) if smooth else None, source)
    if source == "grid":
        f, s = run_grid(model, ys, need_smoother, grid, config.grid_method)
        return Truth(f, s, source)
    if not config.truth_filter_path:
        raise ValueError("cached truth needs a filter dump path")
    f = read_grid_distribution(config.truth_filter_path)
    s = read_grid_distribution(config.truth_smoother_path) if config.truth_smoother_path else None
    if len(f) != len(ys):
        raise ValueError(f"cached truth has {len(f)} rows but the series has {len(ys)}")
    if need_smoother and s is None:
        raise ValueError("cached truth needs a smoother dump for smoother targets")
    return Truth(f, s, source)


@dataclass
class CellResult:
    noise: str
    m: int
    multiplicity: int
    lag: int
    strategy: str
    target: str
    samples: np.ndarray          # Dist per replication
    seconds: np.ndarray          # wall-clock per replication
    per_time: np.ndarray | None = None   # mean per-time Dist

    @property
    def nsim(self) -> int:
        return len(self.samples)

    @property
    def mean(self) -> float:
        return float(np.mean(self.samples))

    @property
    def se(self) -> float:
        if self.nsim < 2:
            return 0.0
        return float(np.std(self.samples, ddof=1) / math.sqrt(self.nsim))

    def row(self) -> dict:
        return {"noise": self.noise, "m": self.m, "multiplicity": self.multiplicity, "lag": self.lag,
                "strategy": self.strategy, "target": self.target, "nsim": self.nsim,
                "mean_dist": self.mean, "se_dist": self.se, "cpu_mean_s": float(np.mean(self.seconds))}


# -- replication workers ----------------------------------------------------

_SHARED = {}


def _init_worker(model, ys, truth_values, grid, target):
    _SHARED.update(model=model, ys=ys, truth=GridDistribution(grid, truth_values), target=target)


def _one_replication(cfg: RunConfig):
    model, ys, truth, target = _SHARED["model"], _SHARED["ys"], _SHARED["truth"], _SHARED["target"]
    scorer = ParticleScorer(truth)
    kwargs = {"on_filter": scorer} if target == "filter" else {"on_smoothed": scorer}
    t0 = time.perf_counter()
    run(model, ys, cfg, keep=False, **kwargs)
    return scorer.total, time.perf_counter() - t0, scorer.per_time


def _one_lag_replication(cfg: RunConfig):
    model, ys, truth = _SHARED["model"], _SHARED["ys"], _SHARED["truth"]
    scorer = LagScorer(truth, cfg.lag)
    run(model, ys, cfg, keep=False, on_step=scorer)
    return scorer.per_lag()


def _map_replications(fn, configs, model, ys, truth: GridDistribution, target, workers):
    init_args = (model, ys, truth.values, truth.grid, target)
    if workers <= 1:
        _init_worker(*init_args)
        return [fn(c) for c in configs]
    with ProcessPoolExecutor(workers, initializer=_init_worker, initargs=init_args) as pool:
        return list(pool.map(fn, configs, chunksize=max(1, len(configs) // (4 * workers))))


# -- accuracy ----------------------------------------------------------------

@dataclass
class ExperimentResult:
    config: ExperimentConfig
    cells: list = field(default_factory=list)

    def cell(self, **key) -> CellResult:
        for c in self.cells:
            if all(getattr(c, k) == v for k, v in key.items()):
                return c
        raise KeyError(key)

    def rows(self) -> list:
        return [c.row() for c in self.cells]

    def per_time_rows(self) -> list:
        out = []
        for c in self.cells:
            if c.per_time is None:
                continue
            for n, v in enumerate(c.per_time, start=1):
                out.append({"noise": c.noise, "m": c.m, "multiplicity": c.multiplicity, "lag": c.lag,
                            "strategy": c.strategy, "target": c.target, "n": n, "mean_dist": float(v)})
        return out


def run_accuracy_experiment(config: ExperimentConfig, ys, truth: Truth | None = None) -> ExperimentResult:
    """Mean and standard error of Dist over NSIM seeded runs for every cell
    of the (m, multiplicity, lag, strategy) sweep."""
    ys = np.asarray(ys, dtype=float)
    needs_smoother = config.target == "smoother"
    truth = truth or compute_truth(config, ys, need_smoother=needs_smoother)
    target_truth = truth.smoother if needs_smoother else truth.filter
    model = config.model()
    workers = worker_count(config.workers)
    result = ExperimentResult(config)
    for m in config.m_values:
        for strategy in config.strategies:
            for L in config.multiplicities:
                if strategy == NoiseStrategy.BALANCED.value and L > 3:
                    continue
                for lag in config.lags:
                    lag = lag if needs_smoother else 0
                    cfgs = [RunConfig(m=m, multiplicity=L, lag=lag, strategy=strategy,
                                      resampler=config.resampler, seed=config.base_seed,
                                      replication=r, backend=config.backend)
                            for r in range(config.replications(m))]
                    out = _map_replications(_one_replication, cfgs, model, ys, target_truth,
                                            config.target, workers)
                    result.cells.append(CellResult(
                        config.noise, m, L, lag, strategy, config.target,
                        np.array([o[0] for o in out]), np.array([o[1] for o in out]),
                        np.mean([o[2] for o in out], axis=0)))
                    if not needs_smoother:
                        break
    return result


# -- lag sweep ---------------------------------------------------------------

def moving_average(values, width: int = 5) -> np.ndarray:
    """Centred moving average; the window shrinks at the ends."""
    values = np.asarray(values, dtype=float)
    half = width // 2
    out = np.empty_like(values)
    for i in range(len(values)):
        lo, hi = max(0, i - half), min(len(values), i + half + 1)
        out[i] = values[lo:hi].mean()
    return out


@dataclass
class LagSweepResult:
    noise: str
    m: int
    samples: np.ndarray   # (nsim, max_lag + 1): Dist per replication and lag

    @property
    def mean(self) -> np.ndarray:
        return self.samples.mean(axis=0)

    @property
    def se(self) -> np.ndarray:
        n = self.samples.shape[0]
        if n < 2:
            return np.zeros(self.samples.shape[1])
        return self.samples.std(axis=0, ddof=1) / math.sqrt(n)

    def argmin(self, smooth_width: int = 1, min_lag: int = 1) -> int:
        curve = self.mean[min_lag:]
        if smooth_width > 1:
            curve = moving_average(curve, smooth_width)
        return int(np.argmin(curve)) + min_lag

    def rows(self) -> list:
        mean, se = self.mean, self.se
        return [{"noise": self.noise, "m": self.m, "lag": lag, "nsim": self.samples.shape[0],
                 "mean_dist": float(mean[lag]), "se_dist": float(se[lag])} for lag in range(len(mean))]


def run_lag_sweep(config: ExperimentConfig, ys, truth: Truth | None = None) -> list:
    """Smoother accuracy for every lag 0..max(config.lags), one result per m.

    A single run at the largest lag scores all smaller lags at once (see
    :class:`mspf.metrics.LagScorer`).
    """
    ys = np.asarray(ys, dtype=float)
    truth = truth or compute_truth(config, ys, need_smoother=True)
    if truth.smoother is None:
        raise ValueError("lag sweep needs a smoother truth")
    max_lag = max(config.lags)
    model = config.model()
    workers = worker_count(config.workers)
    out = []
    for m in config.m_values:
        cfgs = [RunConfig(m=m, multiplicity=config.multiplicities[0], lag=max_lag,
                          strategy=config.strategies[0], resampler=config.resampler,
                          seed=config.base_seed, replication=r, backend=config.backend)
                for r in range(config.replications(m))]
        curves = _map_replications(_one_lag_replication, cfgs, model, ys, truth.smoother, "smoother", workers)
        out.append(LagSweepResult(config.noise, m, np.array(curves)))
    return out


# -- CPU time ----------------------------------------------------------------

@dataclass
class CpuCell:
    mode: str           # "multisample" or "scaled"
    noise: str
    m0: int
    factor: int         # multiplicity (multisample) or l0 (scaled)
    lag: int
    seconds: list

    @property
    def m(self) -> int:
        return self.m0 * self.factor if self.mode == "scaled" else self.m0

    @property
    def multiplicity(self) -> int:
        return self.factor if self.mode == "multisample" else 1

    @property
    def median(self) -> float:
        return statistics.median(self.seconds)

    @property
    def mean(self) -> float:
        return statistics.fmean(self.seconds)

    def row(self) -> dict:
        return {"mode": self.mode, "noise": self.noise, "m0": self.m0, "factor": self.factor, "m": self.m,
                "multiplicity": self.multiplicity, "lag": self.lag, "runs": len(self.seconds),
                "median_s": self.median, "mean_s": self.mean}


def time_run(model, ys, cfg: RunConfig) -> float:
    t0 = time.perf_counter()
    run(model, ys, cfg, keep=False)
    return time.perf_counter() - t0


def run_cpu_benchmark(config: ExperimentConfig, ys, mode: str = "multisample", factors=None,
                      repeats: int = 5, warmup: int = 1) -> list:
    """Wall-clock seconds per full run, serially in this process.

    ``multisample`` varies the multiplicity at m = m0; ``scaled`` runs
    m = m0 * l0 particles at multiplicity 1. The first ``warmup`` runs of
    each cell are discarded.
    """
    if mode not in ("multisample", "scaled"):
        raise ValueError(f"unknown benchmark mode {mode!r}")
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    ys = np.asarray(ys, dtype=float)
    model = config.model()
    factors = tuple(factors or config.multiplicities)
    cells = []
    for m0 in config.m_values:
        for lag in config.lags:
            for f in factors:
                m, L = (m0, f) if mode == "multisample" else (m0 * f, 1)
                secs = []
                for r in range(warmup + repeats):
                    cfg = RunConfig(m=m, multiplicity=L, lag=lag, strategy=config.strategies[0],
                                    resampler=config.resampler, seed=config.base_seed, replication=r,
                                    backend=config.backend)
                    dt = time_run(model, ys, cfg)
                    if r >= warmup:
                        secs.append(dt)
                cells.append(CpuCell(mode, config.noise, m0, f, lag, secs))
    return cells


# -- strategy comparison -----------------------------------------------------

@dataclass
class StrategyComparison:
    noise: str
    m: int
    multiplicity: int
    strategy: str
    cell: CellResult
    baseline: CellResult

    @property
    def diff(self) -> np.ndarray:
        return self.cell.samples - self.baseline.samples

    @property
    def diff_mean(self) -> float:
        return float(self.diff.mean())

    @property
    def diff_se(self) -> float:
        d = self.diff
        return float(d.std(ddof=1) / math.sqrt(len(d))) if len(d) > 1 else 0.0

    def row(self) -> dict:
        return {"noise": self.noise, "m": self.m, "multiplicity": self.multiplicity, "strategy": self.strategy,
                "nsim": self.cell.nsim, "mean_dist": self.cell.mean, "se_dist": self.cell.se,
                "random_mean_dist": self.baseline.mean, "random_se_dist": self.baseline.se,
                "paired_diff": self.diff_mean, "paired_se": self.diff_se}


def compare_strategies(config: ExperimentConfig, ys, truth: Truth | None = None,
                       baseline: ExperimentResult | None = None) -> list:
    """Random vs stratified (and balanced for L <= 3), paired by seed."""
    ys = np.asarray(ys, dtype=float)
    truth = truth or compute_truth(config, ys, need_smoother=config.target == "smoother")
    strategies = [s for s in config.strategies if s != NoiseStrategy.RANDOM.value] or \
        [NoiseStrategy.STRATIFIED.value, NoiseStrategy.BALANCED.value]
    if baseline is None:
        baseline = run_accuracy_experiment(replace(config, strategies=(NoiseStrategy.RANDOM.value,)), ys, truth)
    others = run_accuracy_experiment(replace(config, strategies=tuple(strategies)), ys, truth)
    out = []
    for c in others.cells:
        base = baseline.cell(m=c.m, multiplicity=c.multiplicity, lag=c.lag, strategy="random")
        out.append(StrategyComparison(c.noise, c.m, c.multiplicity, c.strategy, c, base))
    return out


# -- tables ------------------------------------------------------------------

TABLE_COLUMNS = {
    "accuracy_vs_L": ["noise", "m", "multiplicity", "lag", "strategy", "target", "nsim",
                      "mean_dist", "se_dist", "cpu_mean_s"],
    "accuracy_per_time": ["noise", "m", "multiplicity", "lag", "strategy", "target", "n", "mean_dist"],
    "lag_sweep": ["noise", "m", "lag", "nsim", "mean_dist", "se_dist"],
    "cpu_multisample": ["mode", "noise", "m0", "factor", "m", "multiplicity", "lag", "runs", "median_s", "mean_s"],
    "cpu_scaled": ["mode", "noise", "m0", "factor", "m", "multiplicity", "lag", "runs", "median_s", "mean_s"],
    "strategy_comparison": ["noise", "m", "multiplicity", "strategy", "nsim", "mean_dist", "se_dist",
                            "random_mean_dist", "random_se_dist", "paired_diff", "paired_se"],
}

TABLE_NOTES = {
    "accuracy_vs_L": "mean/se of Dist over nsim seeded runs; cpu_mean_s is wall-clock per run",
    "accuracy_per_time": "mean per-time contribution to Dist (n is the 1-based time index)",
    "lag_sweep": "smoother Dist against the fixed-interval truth for every lag",
    "cpu_multisample": "wall-clock seconds per run, m = m0 and multiplicity = factor",
    "cpu_scaled": "wall-clock seconds per run, m = m0 * factor and multiplicity = 1",
    "strategy_comparison": "paired_diff = mean(strategy - random) over seed-paired runs",
}


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_table(path, rows, columns, note: str = "") -> None:
    lines = [f"# {note}" if note else "#", ",".join(columns)]
    lines += [",".join(_fmt(r[c]) for c in columns) for r in rows]
    Path(path).write_text("\n".join(lines) + "\n")


def _parse(text: str):
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


def read_table(path) -> list:
    lines = [ln for ln in Path(path).read_text().splitlines() if ln and not ln.startswith("#")]
    if not lines:
        return []
    header = lines[0].split(",")
    return [dict(zip(header, map(_parse, ln.split(",")))) for ln in lines[1:]]


def emit_tables(results: dict, outdir) -> list:
    """Write one CSV per table in ``results`` (name -> list of row dicts)
    plus ``long.csv`` with one (table, row, column, value) line per cell."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written = []
    long_rows = []
    for name, rows in results.items():
        columns = TABLE_COLUMNS[name]
        path = outdir / f"{name}.csv"
        write_table(path, rows, columns, f"{name}: {TABLE_NOTES[name]}")
        written.append(path)
        for i, r in enumerate(rows):
            long_rows += [{"table": name, "row": i, "column": c, "value": r[c]} for c in columns]
    path = outdir / "long.csv"
    write_table(path, long_rows, ["table", "row", "column", "value"], "long format of every table")
    written.append(path)
    return written
