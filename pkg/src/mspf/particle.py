"""Particle filter and fixed-lag smoother with multi-sample prediction.

Each of the m filter particles spawns ``multiplicity`` candidates in the
prediction step; m particles are then resampled from the multiplicity*m
weighted candidates. Fixed-lag smoothing keeps the last ``lag + 1``
generations of every surviving trajectory and reorders them with the same
resampling indices.

Random-number discipline (fixed so that runs are reproducible and the
multiplicity=1 / random-noise case is the textbook filter draw for draw):

* initialisation: m uniforms;
* prediction: m*multiplicity uniforms, particle-major (Balanced, L=3 uses
  2*m; Balanced, L=2 uses m);
* resampling: one uniform (systematic) or m uniforms (multinomial).
"""

from __future__ import annotations

import enum
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import kernels
from .model import NoiseDistribution, StateSpaceModel, clip_open, open_uniform


_TINY = 2.0**-600


class DegenerateWeightsError(ArithmeticError):
    pass


class NoiseStrategy(str, enum.Enum):
    RANDOM = "random"
    BALANCED = "balanced"
    STRATIFIED = "stratified"


class Resampler(str, enum.Enum):
    MULTINOMIAL = "multinomial"
    SYSTEMATIC = "systematic"


def make_rng(seed: int, replication: int | None = None) -> np.random.Generator:
    """PCG64 stream keyed by hashing (seed, replication) through SeedSequence."""
    entropy = [int(seed)] if replication is None else [int(seed), int(replication)]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


@dataclass(frozen=True)
class RunConfig:
    m: int
    multiplicity: int = 1
    lag: int = 0
    strategy: NoiseStrategy = NoiseStrategy.RANDOM
    resampler: Resampler = Resampler.SYSTEMATIC
    seed: int = 0
    replication: int | None = None
    backend: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "strategy", NoiseStrategy(self.strategy))
        object.__setattr__(self, "resampler", Resampler(self.resampler))
        if int(self.m) < 1:
            raise ValueError("m must be >= 1")
        if int(self.multiplicity) < 1:
            raise ValueError("multiplicity must be >= 1")
        if int(self.lag) < 0:
            raise ValueError("lag must be >= 0")
        if self.strategy is NoiseStrategy.BALANCED and self.multiplicity > 3:
            raise ValueError("balanced noise is only defined for multiplicity 1, 2 or 3")

    def rng(self) -> np.random.Generator:
        return make_rng(self.seed, self.replication)


def init_particles(model: StateSpaceModel, m: int, rng: np.random.Generator) -> np.ndarray:
    if m < 1:
        raise ValueError("m must be >= 1")
    return model.sample_initial(rng, m)


def generate_noises(strategy, dist: NoiseDistribution, multiplicity: int, rng: np.random.Generator,
                    m: int | None = None) -> np.ndarray:
    """System-noise draws, shape ``(m, multiplicity)`` (or ``(multiplicity,)``).

    stratified: slot i draws from the quantile of U((i-1)/L, i/L).
    balanced: L=2 gives (v, -v); L=3 gives (|r|, -|s|, -(|r| - |s|)).
    """
    strategy = NoiseStrategy(strategy)
    L = int(multiplicity)
    rows = 1 if m is None else int(m)
    if strategy is NoiseStrategy.RANDOM or (strategy is NoiseStrategy.BALANCED and L == 1):
        out = dist.quantile(open_uniform(rng, (rows, L)))
    elif strategy is NoiseStrategy.STRATIFIED:
        u = open_uniform(rng, (rows, L))
        out = dist.quantile(clip_open((np.arange(L) + u) / L))
    elif L == 2:
        v = dist.quantile(open_uniform(rng, rows))
        out = np.stack([v, -v], axis=1)
    elif L == 3:
        rs = dist.quantile(open_uniform(rng, (rows, 2)))
        a = np.abs(rs[:, 0])
        b = -np.abs(rs[:, 1])
        out = np.stack([a, b, -(a + b)], axis=1)
    else:
        raise ValueError("balanced noise is unsupported for multiplicity > 3")
    return out[0] if m is None else out


def predict_multi(model: StateSpaceModel, filtered: np.ndarray, config: RunConfig, rng: np.random.Generator):
    """Candidates p^(j,i) = F(f^(j), v^(j,i)), laid out particle-major.

    Returns ``(candidates, parent_index)`` with ``parent_index[c] = c // L``.
    """
    m = filtered.shape[0]
    L = config.multiplicity
    noises = generate_noises(config.strategy, model.system_noise, L, rng, m).reshape(-1)
    parents = np.repeat(np.arange(m), L) if L > 1 else np.arange(m)
    base = filtered if L == 1 else filtered[parents]
    return model.transition(base, noises), parents


def compute_weights(model: StateSpaceModel, candidates: np.ndarray, y: float) -> np.ndarray:
    weights = model.obs_noise.pdf(y - model.observation(candidates))
    total = weights.sum()
    if not (total > 0 and np.isfinite(total)):
        raise DegenerateWeightsError("degenerate weights: every candidate has zero likelihood")
    return weights


def select(weights: np.ndarray, m: int, resampler: Resampler, rng: np.random.Generator, kern=None) -> np.ndarray:
    """Indices of the m resampled candidates (nondecreasing for systematic)."""
    kern = kern or kernels.default
    weights = np.ascontiguousarray(weights, dtype=float)
    top = weights.max()
    if 0 < top < _TINY:
        # far-outlier likelihoods can be subnormal; an exact power-of-two
        # rescale restores full precision without changing any ratio
        weights = np.ldexp(weights, -np.frexp(top)[1])
    if Resampler(resampler) is Resampler.SYSTEMATIC:
        return kern.systematic_select(weights, m, rng.random())
    return kern.multinomial_select(weights, rng.random(m))


def resample(candidates, weights, parent_index, m: int, resampler, rng, kern=None):
    """Returns ``(new_filtered, chosen_parent)``."""
    if len(candidates) != len(weights) or len(weights) == 0:
        raise ValueError("candidates and weights must be nonempty and of equal length")
    if not weights.sum() > 0:
        raise DegenerateWeightsError("degenerate weights: every candidate has zero likelihood")
    idx = select(weights, m, resampler, rng, kern)
    return candidates[idx], np.asarray(parent_index)[idx]


class LagHistory:
    """The last ``lag + 1`` generations of every trajectory.

    ``row(a)`` holds s_{n-a|n} for all j: column j across rows is one
    ancestral trajectory. Two buffers are swapped on every update so the
    gather never works in place.
    """

    def __init__(self, initial: np.ndarray, lag: int, kern=None):
        self.lag = int(lag)
        self.depth = self.lag + 1
        self._kern = kern or kernels.default
        shape = (self.depth,) + initial.shape
        self._buf = np.full(shape, np.nan)
        self._spare = np.empty(shape)
        self._buf[0] = initial
        self.time = 0

    @property
    def rows(self) -> np.ndarray:
        return self._buf

    def row(self, age: int) -> np.ndarray:
        return self._buf[age]

    def advance(self, chosen_parent: np.ndarray, front: np.ndarray) -> None:
        if self._buf.ndim == 2:
            self._kern.shift_gather(self._buf, np.ascontiguousarray(chosen_parent, dtype=np.intp),
                                    np.ascontiguousarray(front, dtype=float), self._spare)
        else:
            kernels.python.shift_gather(self._buf, chosen_parent, front, self._spare)
        self._buf, self._spare = self._spare, self._buf
        self.time += 1

    def emittable(self):
        """(time, age) of the row that has just reached the configured lag, if any."""
        t = self.time - self.lag
        return (t, self.lag) if t >= 1 else None

    def flush_rows(self):
        """(time, age) pairs still held once the series has ended, oldest first."""
        first = max(1, self.time - self.lag + 1)
        return [(t, self.time - t) for t in range(first, self.time + 1)]


@dataclass
class FilterState:
    particles: np.ndarray
    history: LagHistory
    n: int = 0


PHASES = ("predict", "weight", "resample", "history")


@dataclass
class RunResult:
    filter_snapshots: np.ndarray | None      # (N, m) filtered particles
    smoother_snapshots: np.ndarray | None    # (N, m) fixed-lag smoothed particles
    timing: dict = field(default_factory=dict)

    @property
    def total_seconds(self) -> float:
        return sum(self.timing.get(p, 0.0) for p in PHASES)


def initial_state(model: StateSpaceModel, config: RunConfig, rng, kern=None) -> FilterState:
    particles = init_particles(model, config.m, rng)
    return FilterState(particles, LagHistory(particles, config.lag, kern))


def step(model: StateSpaceModel, state: FilterState, y: float, config: RunConfig, rng,
         kern=None, timing: dict | None = None):
    """Advance one observation; returns ``(state, emitted)``.

    ``emitted`` is ``(time, particles)`` for the row that has just aged to
    ``lag`` (a view into the history buffer: copy before the next step), or
    ``None`` while the buffer is still filling.
    """
    kern = kern or kernels.default
    clock = time.perf_counter
    t0 = clock()
    candidates, parents = predict_multi(model, state.particles, config, rng)
    t1 = clock()
    weights = compute_weights(model, candidates, y)
    t2 = clock()
    idx = select(weights, config.m, config.resampler, rng, kern)
    new_filtered = candidates[idx]
    chosen_parent = parents[idx] if config.multiplicity > 1 else idx
    t3 = clock()
    state.history.advance(chosen_parent, new_filtered)
    state.particles = state.history.row(0)
    state.n += 1
    t4 = clock()
    if timing is not None:
        timing["predict"] += t1 - t0
        timing["weight"] += t2 - t1
        timing["resample"] += t3 - t2
        timing["history"] += t4 - t3
    slot = state.history.emittable()
    emitted = None if slot is None else (slot[0], state.history.row(slot[1]))
    return state, emitted


def run(model: StateSpaceModel, ys, config: RunConfig, *, keep: bool = True,
        on_filter: Callable | None = None, on_smoothed: Callable | None = None,
        on_step: Callable | None = None, rng: np.random.Generator | None = None) -> RunResult:
    """Filter and fixed-lag smoother over the whole series.

    Callbacks receive views into live buffers and must copy what they keep:
    ``on_filter(n, particles)``, ``on_smoothed(t, particles)`` (t increasing,
    including the end-of-series flush, where rows have lag < ``config.lag``)
    and ``on_step(n, history)``. With ``keep=False`` no snapshots are stored.
    """
    ys = np.asarray(ys, dtype=float).reshape(-1)
    kern = kernels.get_backend(config.backend) if config.backend else kernels.default
    rng = rng if rng is not None else config.rng()
    timing = dict.fromkeys(PHASES, 0.0)
    n_obs = len(ys)
    filt = smooth = None
    if keep:
        filt = np.empty((n_obs, config.m))
        smooth = np.empty((n_obs, config.m))
    if n_obs == 0:
        return RunResult(filt, smooth, timing)

    state = initial_state(model, config, rng, kern)
    for n, y in enumerate(ys, start=1):
        state, emitted = step(model, state, y, config, rng, kern, timing)
        if keep:
            filt[n - 1] = state.particles
        if on_filter is not None:
            on_filter(n, state.particles)
        if on_step is not None:
            on_step(n, state.history)
        if emitted is not None:
            t, rows = emitted
            if keep:
                smooth[t - 1] = rows
            if on_smoothed is not None:
                on_smoothed(t, rows)
    for t, age in state.history.flush_rows():
        rows = state.history.row(age)
        if keep:
            smooth[t - 1] = rows
        if on_smoothed is not None:
            on_smoothed(t, rows)
    return RunResult(filt, smooth, timing)

