"""Compare the compiled and numpy kernel backends.

Times each hot kernel on representative inputs and a full filter run per
backend, checks that both backends return the same result, and prints a
table of median seconds and speed-ups.

    python benchmarks/bench_backends.py [--repeats 7]
"""

import argparse
import statistics
import time

import numpy as np

from mspf import kernels
from mspf.datagen import generate_series
from mspf.grid import DEFAULT_GRID
from mspf.model import trend_model
from mspf.particle import RunConfig, run


def median_time(fn, repeats):
    fn()  # warmup
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def kernel_cases(rng):
    m, L, depth = 10_000, 10, 101
    w = rng.random(m * L)
    u = rng.random(m)
    hist = rng.standard_normal((depth, m))
    parent = rng.integers(0, m, m).astype(np.intp)
    front = rng.standard_normal(m)
    out = np.empty_like(hist)
    xs = np.sort(rng.standard_normal(1000))
    points = DEFAULT_GRID.points
    truth = np.linspace(0.0, 1.0, points.size)
    rows = np.sort(rng.standard_normal((depth, 1000)), axis=1)
    times = np.arange(depth, dtype=np.intp)
    truth_rows = np.tile(truth, (depth, 1))
    return {
        "systematic_select m=1e4 L=10": lambda k: k.systematic_select(w, m, 0.37),
        "multinomial_select m=1e4 L=10": lambda k: k.multinomial_select(w, u),
        "shift_gather depth=101 m=1e4": lambda k: k.shift_gather(hist, parent, front, out) or out,
        "ecdf_sq_distance m=1e3": lambda k: k.ecdf_sq_distance(xs, truth, points, DEFAULT_GRID.dx),
        "ecdf_sq_distance_rows 101 rows": lambda k: k.ecdf_sq_distance_rows(rows, truth_rows, times, points,
                                                                            DEFAULT_GRID.dx),
    }


def run_cases():
    ys = generate_series()
    model = trend_model("cauchy")
    cases = {}
    for m, L, lag in ((1000, 1, 0), (1000, 10, 0), (10_000, 1, 100)):
        cfg = dict(m=m, multiplicity=L, lag=lag, seed=1, replication=0)
        cases[f"full run m={m} L={L} lag={lag}"] = (
            lambda k, cfg=cfg: run(model, ys, RunConfig(backend=k.name, **cfg)).smoother_snapshots)
    return cases


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=7)
    args = parser.parse_args(argv)
    backends = kernels.available_backends()
    if len(backends) < 2:
        print("compiled kernels are not built; only the numpy backend is available")
    cases = {**kernel_cases(np.random.default_rng(0)), **run_cases()}
    names = [b.name for b in backends]
    print(f"{'case':36s}" + "".join(f"{n:>12s}" for n in names) + ("     speed-up  same" if len(names) > 1 else ""))
    for label, fn in cases.items():
        secs = [median_time(lambda b=b: fn(b), args.repeats) for b in backends]
        line = f"{label:36s}" + "".join(f"{s:12.6f}" for s in secs)
        if len(backends) > 1:
            a, b = (np.asarray(fn(k)) for k in backends)
            same = "exact" if np.array_equal(a, b) else f"{np.max(np.abs(a - b)):.1e}"
            line += f"{secs[0] / secs[1]:12.2f}x  {same}"
        print(line)


if __name__ == "__main__":
    main()
