"""Command-line entry point: ``mspf <subcommand> [flags]``.

Every subcommand writes only below ``--out`` and leaves a ``manifest.json``
there with the full resolved configuration, the input series, seeds and
library versions. Exit codes: 0 success, 1 usage error, 2 runtime error.

Flags can also come from ``--config FILE``: one ``key = value`` per line
(keys are flag names without the leading dashes, ``#`` starts a comment).
Flags given on the command line override the file.
"""

from __future__ import annotations

import argparse
import json
import math
import platform
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, kernels
from .datagen import DEFAULT_SPEC, SeriesSpec, generate_series, read_series_csv, write_series_csv
from .experiments import (ExperimentConfig, compare_strategies, compute_truth, emit_tables,
                          run_accuracy_experiment, run_cpu_benchmark, run_lag_sweep, write_table)
from .grid import DEFAULT_GRID, run_grid_densities, write_grid_distribution
from .kalman import kalman_filter, kalman_smoother, moments_to_grid
from .model import DEFAULT_INITIAL_VAR, DEFAULT_SIGMA2, DEFAULT_TAU2, NoiseDistribution, trend_model
from .particle import NoiseStrategy, Resampler, RunConfig, run

PERCENT_POINTS = (0.13, 2.27, 15.87, 50.0, 84.13, 97.73, 99.87)
SUBCOMMANDS = ("gen-data", "kalman", "grid", "pf", "sweep-l", "sweep-lag", "bench-cpu",
               "compare-strategies", "dump-truth")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def int_list(text: str) -> tuple:
    """'1,2,5' or '1-10' (inclusive) or a mix: '1-3,10'."""
    out = []
    try:
        for part in str(text).split(","):
            part = part.strip()
            if not part:
                continue
            if "-" in part[1:]:
                lo, hi = part.split("-", 1)
                out.extend(range(int(lo), int(hi) + 1))
            else:
                out.append(int(float(part)) if "e" in part.lower() else int(part))
    except ValueError:
        raise argparse.ArgumentTypeError(f"cannot parse integer list {text!r}") from None
    if not out:
        raise argparse.ArgumentTypeError("empty integer list")
    return tuple(out)


def str_list(text: str) -> tuple:
    return tuple(p.strip() for p in str(text).split(",") if p.strip())


def positive_float(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not (math.isfinite(v) and v > 0):
        raise argparse.ArgumentTypeError(f"must be a positive number, got {text!r}")
    return v


def _count(text: str) -> int:
    try:
        return int(float(text)) if "e" in str(text).lower() else int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None


def _add_common(p):
    g = p.add_argument_group("common")
    g.add_argument("--out", default="out", help="output directory (default: out)")
    g.add_argument("--config", help="flat key=value config file")
    g.add_argument("--data", help="CSV observation series (default: built-in synthetic series)")
    g.add_argument("--seed", type=_count, default=1, help="random seed (default: 1)")
    g.add_argument("--noise", choices=("gauss", "cauchy"), default="cauchy", help="system noise law")
    g.add_argument("--tau2", type=positive_float, default=DEFAULT_TAU2, help="system noise tau^2 (placeholder default)")
    g.add_argument("--sigma2", type=positive_float, default=DEFAULT_SIGMA2, help="observation noise variance")
    g.add_argument("--initial-var", type=positive_float, default=DEFAULT_INITIAL_VAR, help="variance of x_0")
    g.add_argument("--backend", choices=("auto", "python", "cython"), default="auto", help="kernel backend")


def _add_pf_axes(p, *, multi=True):
    p.add_argument("--m-values", type=int_list, default=(100, 1000), help="particle counts, e.g. 100,1000")
    if multi:
        p.add_argument("--multiplicities", type=int_list, default=tuple(range(1, 11)), help="e.g. 1-10")
    p.add_argument("--nsim", type=_count, help="replications per cell (default scales with m)")
    p.add_argument("--resampler", choices=[r.value for r in Resampler], default="systematic")
    p.add_argument("--truth", choices=("auto", "kalman", "grid", "cached"), default="auto")
    p.add_argument("--truth-filter", help="cached filter truth dump (with --truth cached)")
    p.add_argument("--truth-smoother", help="cached smoother truth dump (with --truth cached)")
    p.add_argument("--grid-method", choices=("direct", "fft"), default="fft")
    p.add_argument("--workers", type=_count, help="worker processes (capped by MSPF_WORKERS)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mspf", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"mspf {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="SUBCOMMAND", parser_class=_Parser)

    p = sub.add_parser("gen-data", help="write the synthetic benchmark series")
    _add_common(p)
    p.add_argument("--length", type=_count, default=DEFAULT_SPEC.length)
    p.add_argument("--obs-var", type=positive_float, default=1.0, help="observation noise variance")

    p = sub.add_parser("kalman", help="Kalman filter/smoother moments (Gaussian model)")
    _add_common(p)
    p.add_argument("--dump-grid", action="store_true", help="also write grid CDF dumps")

    p = sub.add_parser("grid", help="numerical-integration filter/smoother")
    _add_common(p)
    p.add_argument("--method", choices=("direct", "fft"), default="direct")
    p.add_argument("--no-smoother", action="store_true")
    p.add_argument("--dump", action="store_true", help="write binary CDF dumps")

    p = sub.add_parser("pf", help="one particle filter / fixed-lag smoother run")
    _add_common(p)
    p.add_argument("--m", type=_count, required=True, help="number of particles")
    p.add_argument("--multiplicity", type=_count, default=1, help="candidates per particle")
    p.add_argument("--lag", type=_count, default=0, help="fixed smoothing lag (0 = filter only)")
    p.add_argument("--strategy", choices=[s.value for s in NoiseStrategy], default="random")
    p.add_argument("--resampler", choices=[r.value for r in Resampler], default="systematic")
    p.add_argument("--dump-snapshots", action="store_true", help="write raw particles to snapshots.npz")

    p = sub.add_parser("sweep-l", help="accuracy vs multiplicity")
    _add_common(p)
    _add_pf_axes(p)
    p.add_argument("--target", choices=("filter", "smoother"), default="filter")
    p.add_argument("--lags", type=int_list, default=(0,), help="lags for --target smoother")
    p.add_argument("--strategies", type=str_list, default=("random",))

    p = sub.add_parser("sweep-lag", help="smoother accuracy vs lag")
    _add_common(p)
    _add_pf_axes(p, multi=False)
    p.add_argument("--multiplicity", type=_count, default=1)
    p.add_argument("--max-lag", type=_count, default=100)
    p.add_argument("--smooth-width", type=_count, default=5, help="moving-average width for the argmin")

    p = sub.add_parser("bench-cpu", help="CPU time: multi-sample vs scaled particle count")
    _add_common(p)
    p.add_argument("--m-values", type=int_list, default=(10_000,))
    p.add_argument("--factors", type=int_list, default=tuple(range(1, 11)), help="L or l0 values")
    p.add_argument("--lags", type=int_list, default=(0, 100))
    p.add_argument("--mode", choices=("multisample", "scaled", "both"), default="both")
    p.add_argument("--repeats", type=_count, default=5)
    p.add_argument("--warmup", type=_count, default=1)

    p = sub.add_parser("compare-strategies", help="random vs stratified/balanced noise")
    _add_common(p)
    _add_pf_axes(p)
    p.add_argument("--strategies", type=str_list, default=("stratified", "balanced"))

    p = sub.add_parser("dump-truth", help="write reference filter/smoother CDF dumps")
    _add_common(p)
    p.add_argument("--truth", choices=("auto", "kalman", "grid"), default="auto")
    p.add_argument("--grid-method", choices=("direct", "fft"), default="direct")
    p.add_argument("--no-smoother", action="store_true")
    return parser


def read_config_file(path) -> dict:
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}: line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.lstrip("-").replace("_", "-")] = value
    return out


def _validate(args) -> None:
    checks = [
        ("m", lambda v: v >= 1, "m must be ≥ 1"),
        ("multiplicity", lambda v: v >= 1, "multiplicity must be ≥ 1"),
        ("lag", lambda v: v >= 0, "lag must be ≥ 0"),
        ("nsim", lambda v: v is None or v >= 1, "nsim must be ≥ 1"),
        ("max_lag", lambda v: v >= 1, "max-lag must be ≥ 1"),
        ("repeats", lambda v: v >= 1, "repeats must be ≥ 1"),
        ("warmup", lambda v: v >= 0, "warmup must be ≥ 0"),
        ("length", lambda v: v >= 1, "length must be ≥ 1"),
        ("workers", lambda v: v is None or v >= 1, "workers must be ≥ 1"),
        ("smooth_width", lambda v: v >= 1, "smooth-width must be ≥ 1"),
    ]
    for name, ok, msg in checks:
        if hasattr(args, name) and not ok(getattr(args, name)):
            raise UsageError(msg)
    for name in ("m_values", "factors", "multiplicities"):
        if hasattr(args, name) and min(getattr(args, name)) < 1:
            raise UsageError(f"{name.replace('_', '-')} must all be ≥ 1")
    if hasattr(args, "lags") and min(args.lags) < 0:
        raise UsageError("lags must all be ≥ 0")
    if getattr(args, "strategy", None) == "balanced" and args.multiplicity > 3:
        raise UsageError("balanced noise needs multiplicity ≤ 3")
    for s in getattr(args, "strategies", ()):
        if s not in {x.value for x in NoiseStrategy}:
            raise UsageError(f"unknown strategy {s!r}")
    if getattr(args, "truth", None) == "cached" and not args.truth_filter:
        raise UsageError("--truth cached requires --truth-filter")
    if getattr(args, "truth", None) == "kalman" and args.noise != "gauss":
        raise UsageError("--truth kalman requires --noise gauss")


def parse_args(argv=None) -> argparse.Namespace:
    """Parse and validate; raises :class:`UsageError` on bad input."""
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        raise UsageError(f"mspf: a subcommand is required ({', '.join(SUBCOMMANDS)})")
    if args.config:
        sub = parser._subparsers._group_actions[0].choices[args.command]
        actions = {a.dest: a for a in sub._actions}
        defaults = {}
        for key, value in read_config_file(args.config).items():
            dest = key.replace("-", "_")
            action = actions.get(dest)
            if action is None or dest in ("config", "help"):
                raise UsageError(f"{args.config}: unknown key {key!r} for {args.command}")
            if action.const is not None and action.nargs == 0:  # store_true flags
                defaults[dest] = value.lower() in ("1", "true", "yes", "on")
                continue
            try:
                defaults[dest] = action.type(value) if action.type else value
            except (argparse.ArgumentTypeError, ValueError) as exc:
                raise UsageError(f"{args.config}: {key}: {exc}") from None
            if action.choices is not None and defaults[dest] not in action.choices:
                raise UsageError(f"{args.config}: {key}: invalid choice {value!r}")
        sub.set_defaults(**defaults)
        args = parser.parse_args(argv)
    _validate(args)
    args.argv = argv
    return args


# -- helpers -------------------------------------------------------------------

def _series(args):
    if args.data:
        return read_series_csv(args.data)
    return generate_series()


def _experiment_config(args, **overrides) -> ExperimentConfig:
    kw = dict(noise=args.noise, tau2=args.tau2, sigma2=args.sigma2, initial_var=args.initial_var,
              base_seed=args.seed, backend=None if args.backend == "auto" else args.backend)
    for key, attr in (("m_values", "m_values"), ("multiplicities", "multiplicities"), ("nsim", "nsim"),
                      ("resampler", "resampler"), ("truth_source", "truth"), ("grid_method", "grid_method"),
                      ("workers", "workers"), ("truth_filter_path", "truth_filter"),
                      ("truth_smoother_path", "truth_smoother"), ("lags", "lags"), ("strategies", "strategies"),
                      ("target", "target")):
        if hasattr(args, attr):
            kw[key] = getattr(args, attr)
    kw.update(overrides)
    return ExperimentConfig(**kw)


def nearest_rank_quantiles(particles, percents=PERCENT_POINTS) -> list:
    xs = np.sort(particles)
    m = xs.size
    return [float(xs[max(1, math.ceil(p / 100.0 * m)) - 1]) for p in percents]


def _jsonable(value):
    if isinstance(value, (tuple, list)):
        return [_jsonable(v) for v in value]
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    return value


def write_manifest(out: Path, args, ys, outputs, extra=None) -> Path:
    config = {k: _jsonable(v) for k, v in vars(args).items() if k not in ("argv",)}
    manifest = {
        "command": args.command,
        "argv": args.argv,
        "config": config,
        "series": [float(v) for v in ys] if ys is not None else None,
        "library_version": __version__,
        "kernel_backend": kernels.get_backend(None if args.backend == "auto" else args.backend).name,
        "environment": {"python": platform.python_version(), "numpy": np.__version__,
                        "platform": platform.platform(), "processor": platform.processor()},
        "created": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "outputs": sorted(str(Path(p).relative_to(out)) for p in outputs),
    }
    if extra:
        manifest.update(extra)
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2) + "\n")
    return path


# -- subcommands ---------------------------------------------------------------

def cmd_gen_data(args, out):
    spec = SeriesSpec(length=args.length, seed=args.seed, obs_noise=NoiseDistribution.gaussian(args.obs_var),
                      segment_means=tuple((s, lv) for s, lv in DEFAULT_SPEC.segment_means if s <= args.length))
    ys = generate_series(spec)
    path = out / "series.csv"
    write_series_csv(ys, path)
    return ys, [path], {}


def cmd_kalman(args, out):
    if args.noise != "gauss":
        raise UsageError("kalman requires --noise gauss")
    ys = _series(args)
    lin = trend_model("gauss", args.tau2, args.sigma2, args.initial_var).linearization()
    pred, filt, loglik = kalman_filter(lin, ys)
    smooth = kalman_smoother(lin, pred, filt)
    rows = [{"n": n + 1, "pred_mean": float(pred.scalar_means[n]), "pred_var": float(pred.scalar_variances[n]),
             "filt_mean": float(filt.scalar_means[n]), "filt_var": float(filt.scalar_variances[n]),
             "smooth_mean": float(smooth.scalar_means[n]), "smooth_var": float(smooth.scalar_variances[n])}
            for n in range(len(ys))]
    path = out / "kalman.csv"
    write_table(path, rows, list(rows[0]), "Kalman filter and fixed-interval smoother moments")
    outputs = [path]
    if args.dump_grid:
        for name, mom in (("kalman_filter.grd", filt), ("kalman_smoother.grd", smooth)):
            write_grid_distribution(moments_to_grid(mom, DEFAULT_GRID), out / name)
            outputs.append(out / name)
    return ys, outputs, {"log_likelihood": loglik}


def _cdf_quantiles(cdf_row, points, percents=PERCENT_POINTS):
    idx = np.searchsorted(cdf_row, np.asarray(percents) / 100.0, side="left")
    return [float(points[min(i, len(points) - 1)]) for i in idx]


def cmd_grid(args, out):
    ys = _series(args)
    model = trend_model(args.noise, args.tau2, args.sigma2, args.initial_var)
    res = run_grid_densities(model, ys, not args.no_smoother, DEFAULT_GRID, args.method)
    fd, sd = res.filter_distribution, res.smoother_distribution
    rows = []
    for kind, d in (("filter", fd), ("smoother", sd)):
        if d is None:
            continue
        for n, row in enumerate(d.values, start=1):
            qs = _cdf_quantiles(row, DEFAULT_GRID.points)
            rows.append({"n": n, "kind": kind, **{f"p{p}": q for p, q in zip(PERCENT_POINTS, qs)}})
    path = out / "grid_quantiles.csv"
    write_table(path, rows, ["n", "kind"] + [f"p{p}" for p in PERCENT_POINTS],
                "grid-point percent points of the numerical-integration distributions")
    outputs = [path]
    if args.dump:
        write_grid_distribution(fd, out / "grid_filter.grd")
        outputs.append(out / "grid_filter.grd")
        if sd is not None:
            write_grid_distribution(sd, out / "grid_smoother.grd")
            outputs.append(out / "grid_smoother.grd")
    return ys, outputs, {}


def cmd_pf(args, out):
    ys = _series(args)
    model = trend_model(args.noise, args.tau2, args.sigma2, args.initial_var)
    cfg = RunConfig(m=args.m, multiplicity=args.multiplicity, lag=args.lag, strategy=args.strategy,
                    resampler=args.resampler, seed=args.seed,
                    backend=None if args.backend == "auto" else args.backend)
    res = run(model, ys, cfg)
    rows = []
    for kind, snaps in (("filter", res.filter_snapshots), ("smoother", res.smoother_snapshots)):
        for n, parts in enumerate(snaps, start=1):
            qs = nearest_rank_quantiles(parts)
            rows.append({"n": n, "kind": kind, **{f"p{p}": q for p, q in zip(PERCENT_POINTS, qs)}})
    path = out / "pf_quantiles.csv"
    write_table(path, rows, ["n", "kind"] + [f"p{p}" for p in PERCENT_POINTS],
                "nearest-rank percent points of the particle sets")
    outputs = [path]
    if args.dump_snapshots:
        np.savez_compressed(out / "snapshots.npz", filter=res.filter_snapshots, smoother=res.smoother_snapshots)
        outputs.append(out / "snapshots.npz")
    return ys, outputs, {"timing_s": res.timing}


def cmd_sweep_l(args, out):
    ys = _series(args)
    config = _experiment_config(args)
    result = run_accuracy_experiment(config, ys)
    paths = emit_tables({"accuracy_vs_L": result.rows(), "accuracy_per_time": result.per_time_rows()}, out)
    return ys, paths, {"truth_source": config.truth_source}


def cmd_sweep_lag(args, out):
    ys = _series(args)
    config = _experiment_config(args, lags=(args.max_lag,), multiplicities=(args.multiplicity,),
                                target="smoother")
    results = run_lag_sweep(config, ys)
    rows = [r for res in results for r in res.rows()]
    paths = emit_tables({"lag_sweep": rows}, out)
    argmin = {str(r.m): r.argmin(args.smooth_width) for r in results}
    return ys, paths, {"argmin_lag": argmin}


def cmd_bench_cpu(args, out):
    ys = _series(args)
    config = _experiment_config(args, lags=args.lags, nsim=1)
    tables = {}
    modes = ("multisample", "scaled") if args.mode == "both" else (args.mode,)
    for mode in modes:
        cells = run_cpu_benchmark(config, ys, mode, args.factors, args.repeats, args.warmup)
        tables[f"cpu_{mode}"] = [c.row() for c in cells]
    paths = emit_tables(tables, out)
    return ys, paths, {"kernel_backend_timed": kernels.get_backend(config.backend).name}


def cmd_compare_strategies(args, out):
    ys = _series(args)
    config = _experiment_config(args)
    comps = compare_strategies(config, ys)
    paths = emit_tables({"strategy_comparison": [c.row() for c in comps]}, out)
    return ys, paths, {}


def cmd_dump_truth(args, out):
    ys = _series(args)
    config = ExperimentConfig(noise=args.noise, tau2=args.tau2, sigma2=args.sigma2, initial_var=args.initial_var,
                              truth_source=args.truth, grid_method=args.grid_method)
    truth = compute_truth(config, ys, need_smoother=not args.no_smoother)
    outputs = [out / "truth_filter.grd"]
    write_grid_distribution(truth.filter, outputs[0])
    if truth.smoother is not None:
        outputs.append(out / "truth_smoother.grd")
        write_grid_distribution(truth.smoother, outputs[1])
    return ys, outputs, {"truth_source": truth.source}


COMMANDS = {
    "gen-data": cmd_gen_data, "kalman": cmd_kalman, "grid": cmd_grid, "pf": cmd_pf,
    "sweep-l": cmd_sweep_l, "sweep-lag": cmd_sweep_lag, "bench-cpu": cmd_bench_cpu,
    "compare-strategies": cmd_compare_strategies, "dump-truth": cmd_dump_truth,
}


def execute(args) -> int:
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        ys, outputs, extra = COMMANDS[args.command](args, out)
        write_manifest(out, args, ys, outputs, extra)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime failure: report, don't trace
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    return execute(args)


if __name__ == "__main__":
    sys.exit(main())
