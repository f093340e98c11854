"""
Command-line front end.

Verbs: ``recover``, ``incremental``, ``benchmark <name>``,
``coherence-study`` and ``cv-epsilon``. Each writes a JSON result bundle
(to ``--out`` or stdout) and, for multi-trial studies, plot-ready CSV
series next to it. Fatal errors print a JSON error object to stderr and
exit with status 1.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .basis import SampleSet
from .exceptions import SparsePCEError
from .experiments import (aggregate, coherence_study, conventional_fit, inclusion_orders,
                          make_benchmark, run_comparison, training_points)
from .incremental import IncrementalConfig, run_incremental
from .metrics import (basis_fitter, cross_validate_epsilon, cv_error_curve,
                      importance_from_orders)
from .solvers import ToleranceSpec

logger = logging.getLogger("sparsepce")

RANGE_TOL = 1e-9
SERIES_UNITS = {
    "M": "samples", "success_rate": "fraction", "mean_relative_error": "relative L2",
    "mean_nnz": "terms", "mean_d_star": "inputs", "n_trials": "count", "n_failed": "count",
    "d": "inputs", "k": "order", "mean_coherence": "cosine", "input": "index (1-based)",
    "importance": "score", "tau": "fraction of ||u||", "cv_error": "relative L2",
}


class CliError(Exception):
    """User-facing failure reported as structured JSON."""


# ---------------------------------------------------------------------------
# sample ingestion

def ingest_samples(path, bounds=None) -> SampleSet:
    """Read a CSV with header ``x1,...,xd,u`` into a SampleSet.

    Parameters
    ----------
    path : str or Path
    bounds : sequence, optional
        Either one ``(lo, hi)`` pair applied to every input or one pair per
        input. Coordinates are mapped affinely from [lo, hi] onto [-1, 1].

    Raises
    ------
    ValueError
        On a malformed header, unparseable cell (row and column named),
        ragged row, non-finite value or out-of-range coordinate.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    d = len(header) - 1
    if d < 1 or header != [f"x{i}" for i in range(1, d + 1)] + ["u"]:
        raise ValueError(f"{path}: header must be x1,...,xd,u (got {','.join(header)})")
    data = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != d + 1:
            raise ValueError(f"{path}: row {lineno} has {len(row)} fields, expected {d + 1}")
        vals = []
        for col, cell in zip(header, row):
            try:
                v = float(cell)
            except ValueError:
                raise ValueError(
                    f"{path}: row {lineno}, column {col}: cannot parse {cell.strip()!r}") from None
            if not math.isfinite(v):
                raise ValueError(f"{path}: row {lineno}, column {col}: non-finite value")
            vals.append(v)
        data.append(vals)
    if not data:
        raise ValueError(f"{path}: no data rows")
    arr = np.array(data)
    pts, u = arr[:, :d], arr[:, d]
    if bounds is not None:
        b = np.asarray(bounds, dtype=float)
        if b.shape == (2,):
            b = np.tile(b, (d, 1))
        if b.shape != (d, 2) or np.any(b[:, 1] <= b[:, 0]):
            raise ValueError(f"bounds must be one (lo, hi) pair or {d} increasing pairs")
        pts = 2.0 * (pts - b[:, 0]) / (b[:, 1] - b[:, 0]) - 1.0
    bad = np.argwhere(np.abs(pts) > 1.0 + RANGE_TOL)
    if bad.size:
        r, c = bad[0]
        raise ValueError(f"{path}: row {r + 2}, column x{c + 1}: value outside [-1, 1]")
    return SampleSet(np.clip(pts, -1.0, 1.0), u)


def write_samples(path, samples: SampleSet):
    d = samples.dim
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{i}" for i in range(1, d + 1)] + ["u"])
        for p, v in zip(samples.points, samples.values):
            w.writerow([repr(float(x)) for x in p] + [repr(float(v))])


# ---------------------------------------------------------------------------
# output helpers

def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def config_hash(config: dict) -> str:
    blob = json.dumps(_jsonable(config), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


def write_series(path, columns: dict, chash: str, title: str):
    """CSV with a comment line naming the config hash and a unit-tagged header."""
    names = list(columns)
    n = len(next(iter(columns.values())))
    with Path(path).open("w", newline="") as fh:
        fh.write(f"# {title}; config_hash={chash}\n")
        w = csv.writer(fh)
        w.writerow([f"{c} [{SERIES_UNITS.get(c.split(':')[0], '-')}]" for c in names])
        for i in range(n):
            row = [_jsonable(columns[c][i]) for c in names]
            w.writerow(["" if v is None else v for v in row])


def _emit(bundle: dict, out, series=None):
    bundle = _jsonable(bundle)
    text = json.dumps(bundle, indent=2, sort_keys=True, allow_nan=False)
    if out is None:
        sys.stdout.write(text + "\n")
        return bundle
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(text + "\n")
    for name, (columns, title) in (series or {}).items():
        write_series(out.with_name(f"{out.stem}_{name}.csv"), columns, bundle["config_hash"], title)
    return bundle


def _bundle(experiment, config, records=None, aggregates=None, **extra):
    out = {"version": __version__, "experiment": experiment, "config": config,
           "config_hash": config_hash(config)}
    if records is not None:
        out["records"] = records
    if aggregates is not None:
        out["aggregates"] = aggregates
    out.update(extra)
    return out


def _tolerance(args):
    if args.epsilon_abs is not None:
        return ToleranceSpec.absolute(args.epsilon_abs)
    return ToleranceSpec.rel(args.epsilon_rel)


def _parse_list(text, cast=int):
    if isinstance(text, (list, tuple)):
        return [cast(t) for t in text]
    text = str(text)
    if ".." in text:
        a, b = text.split("..")
        return list(range(int(a), int(b) + 1))
    return [cast(t) for t in text.split(",") if t.strip()]


def _load_samples(args):
    if args.samples:
        return ingest_samples(args.samples, args.bounds)
    if args.benchmark:
        bench = make_benchmark(args.benchmark)
        pts = training_points(bench.dim, args.M, args.seed)
        return SampleSet(pts, np.asarray(bench.target(pts), dtype=float))
    raise CliError("provide --samples FILE or --benchmark NAME")


def _source(args):
    return {"samples": args.samples, "bounds": args.bounds} if args.samples else \
        {"benchmark": args.benchmark, "M": args.M, "seed": args.seed}


# ---------------------------------------------------------------------------
# verbs

def cmd_recover(args):
    samples = _load_samples(args)
    dims = tuple(range(samples.dim)) if args.dims is None else tuple(_parse_list(args.dims))
    tol = _tolerance(args)
    sub = SampleSet(samples.points[:, list(dims)], samples.values)
    sol, failed = conventional_fit(sub, args.order, tol, args.solver)
    sol = replace(sol, active_dims=dims, ambient_dim=samples.dim)
    config = {"experiment": "recover", "order": args.order, "dims": list(dims),
              "solver": args.solver, "tolerance": tol.to_dict(), "source": _source(args)}
    record = {**sol.summary(), "failed": failed,
              "coefficients": [[list(a), float(c)] for a, c in
                               sorted(sol.ambient_coefficients().items())]}
    return _emit(_bundle("recover", config, records=[record]), args.out)


def cmd_incremental(args):
    samples = _load_samples(args)
    tol = _tolerance(args)
    if args.solver == "ls":
        raise CliError("the incremental search needs a sparse solver (bpdn or l1l2)")
    cfg = IncrementalConfig(
        epsilon=tol, initial_order=args.initial_order,
        initial_dims=tuple(_parse_list(args.initial_dims)) if args.initial_dims else (),
        max_order=args.max_order, max_dims=args.max_dims, basis_cap=args.basis_cap,
        tie_break=args.tie_break, solver=args.solver)
    res = run_incremental(samples, cfg)
    config = {"experiment": "incremental", "solver": args.solver, "tolerance": tol.to_dict(),
              "initial_order": cfg.initial_order, "initial_dims": list(cfg.initial_dims),
              "max_order": cfg.max_order, "max_dims": cfg.max_dims,
              "basis_cap": cfg.basis_cap, "tie_break": cfg.tie_break.value,
              "source": _source(args)}
    record = {**res.summary(), "inclusion_order": res.inclusion_order,
              "coefficients": [[list(a), float(c)] for a, c in
                               sorted(res.solution.ambient_coefficients().items())]}
    return _emit(_bundle("incremental", config, records=[record], trace=res.trace), args.out)


def _panel_series(aggregates, methods):
    cols = {"M": sorted({int(M) for m in methods for M in aggregates.get(m, {})})}
    for m in methods:
        for key in ("success_rate", "mean_relative_error", "mean_nnz", "mean_d_star"):
            cols[f"{key}:{m}"] = [aggregates[m].get(str(M), {}).get(key) for M in cols["M"]]
    return cols


def cmd_benchmark(args):
    overrides = {}
    if args.sizes:
        overrides["sample_sizes"] = tuple(_parse_list(args.sizes))
    if args.epsilon_rel is not None and args.epsilon_rel_given:
        overrides["tolerance"] = ToleranceSpec.rel(args.epsilon_rel)
    if args.epsilon_abs is not None:
        overrides["tolerance"] = ToleranceSpec.absolute(args.epsilon_abs)
    if args.solver_given:
        if args.solver == "ls":
            raise CliError("benchmarks compare sparse solvers; use bpdn or l1l2")
        overrides["solver"] = args.solver
    for key in ("K", "K1", "grid", "target_seed"):
        if getattr(args, key.lower(), None) is not None:
            overrides[key] = getattr(args, key.lower())
    if args.conventional_order is not None:
        overrides["conventional_order"] = args.conventional_order
    if args.threshold is not None:
        overrides["threshold"] = args.threshold
    bench = make_benchmark(args.name, **overrides)
    seeds = [args.seed + j for j in range(args.trials or bench.n_trials)]
    records = run_comparison(bench, seeds=seeds, workers=args.workers)
    agg = aggregate(records)
    methods = sorted(agg)
    config = {"experiment": "benchmark", **bench.describe(), "seeds": seeds,
              "overrides": {k: (v.to_dict() if isinstance(v, ToleranceSpec) else v)
                            for k, v in overrides.items()}}
    series = {"panels": (_panel_series(agg, methods), f"{bench.name} aggregate series")}
    orders = inclusion_orders(records)
    extra = {}
    if orders:
        imp = {}
        for M in bench.sample_sizes:
            imp[str(M)] = importance_from_orders(inclusion_orders(records, M), bench.dim).tolist()
        extra["importance"] = imp
        last = str(bench.sample_sizes[-1])
        series["importance"] = ({"input": list(range(1, bench.dim + 1)),
                                 "importance": imp[last]},
                                f"{bench.name} importance at M={last}")
    return _emit(_bundle("benchmark", config, records, agg, **extra), args.out, series)


def cmd_coherence(args):
    dims, orders = _parse_list(args.dims), _parse_list(args.orders)
    sizes = _parse_list(args.sizes)
    seeds = [args.seed + j for j in range(args.trials)]
    grid = coherence_study(dims, orders, sizes, seeds)
    config = {"experiment": "coherence_study", "dims": dims, "orders": orders,
              "sample_sizes": sizes, "seeds": seeds}
    cols = {"d": [d for d in dims for _ in orders], "k": [k for _ in dims for k in orders]}
    for m, M in enumerate(sizes):
        cols[f"mean_coherence:M={M}"] = [float(grid[m, a, b]) for a in range(len(dims))
                                         for b in range(len(orders))]
    bundle = _bundle("coherence_study", config,
                     aggregates={str(M): grid[m].tolist() for m, M in enumerate(sizes)})
    return _emit(bundle, args.out, {"grid": (cols, "mean mutual coherence")})


def cmd_cv(args):
    samples = _load_samples(args)
    taus = _parse_list(args.taus, float)
    dims = None if args.dims is None else _parse_list(args.dims)
    method = "bpdn" if args.solver == "ls" else args.solver
    fit = basis_fitter(args.order, dims, method)
    curve = cv_error_curve(samples, taus, args.folds, fit, args.seed)
    tol = cross_validate_epsilon(samples, taus, args.folds, fit=fit, seed=args.seed)
    config = {"experiment": "cv_epsilon", "taus": taus, "folds": args.folds,
              "order": args.order, "dims": dims, "solver": method, "seed": args.seed,
              "source": _source(args)}
    bundle = _bundle("cv_epsilon", config, aggregates={"tau": taus, "cv_error": curve.tolist()},
                     selected=tol.to_dict())
    return _emit(bundle, args.out, {"curve": ({"tau": taus, "cv_error": curve.tolist()},
                                              "cross-validation error curve")})


# ---------------------------------------------------------------------------
# parser

def _common(p):
    p.add_argument("--config", help="YAML or JSON file whose keys set defaults for this verb")
    p.add_argument("--seed", type=int, default=0, help="base seed (default 0)")
    p.add_argument("--trials", type=int, default=None, help="number of seeds / trials")
    p.add_argument("--out", default=None, help="JSON output path; CSV series go beside it")
    p.add_argument("--epsilon-rel", type=float, default=0.01,
                   help="relative residual tolerance tau, eps = tau*||u|| (default 0.01)")
    p.add_argument("--epsilon-abs", type=float, default=None, help="absolute tolerance")
    p.add_argument("--solver", choices=["bpdn", "l1l2", "ls"], default="bpdn",
                   help="recovery solver (default bpdn)")
    p.add_argument("--workers", type=int, default=1, help="processes for trial fan-out")
    p.add_argument("--print-config", action="store_true",
                   help="print the effective configuration as JSON and exit")
    p.add_argument("-v", "--verbose", action="store_true")


def _sample_source(p):
    p.add_argument("--samples", help="CSV file with header x1,...,xd,u")
    p.add_argument("--bounds", type=json.loads, default=None,
                   help='JSON [lo, hi] or [[lo, hi], ...] mapped onto [-1, 1]')
    p.add_argument("--benchmark", help="draw samples from a named benchmark instead")
    p.add_argument("--M", type=int, default=100, help="sample count with --benchmark")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sparsepce",
        description="Sparse polynomial chaos recovery and incremental basis search.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("recover", help="fixed-basis sparse recovery")
    _common(p)
    _sample_source(p)
    p.add_argument("--order", type=int, default=2, help="total order (default 2)")
    p.add_argument("--dims", default=None, help="inputs to use, e.g. 0,1,2 (default all)")
    p.set_defaults(func=cmd_recover)

    p = sub.add_parser("incremental", help="incremental dimension/order search")
    _common(p)
    _sample_source(p)
    p.add_argument("--initial-order", type=int, default=2)
    p.add_argument("--initial-dims", default=None, help="a-priori influential inputs")
    p.add_argument("--max-order", type=int, default=12)
    p.add_argument("--max-dims", type=int, default=None)
    p.add_argument("--basis-cap", type=int, default=20_000)
    p.add_argument("--tie-break", choices=["prefer_order", "prefer_dim"], default="prefer_order")
    p.set_defaults(func=cmd_incremental)

    p = sub.add_parser("benchmark", help="paired incremental vs conventional study")
    _common(p)
    p.add_argument("name", choices=["example1", "example1-l1l2", "example2", "example3"])
    p.add_argument("--sizes", default=None, help="sample sizes, e.g. 100,200,300")
    p.add_argument("--k", type=int, default=None, help="example3 ambient dimension")
    p.add_argument("--k1", type=int, default=None, help="example3 leading dimension count")
    p.add_argument("--grid", type=int, default=None, help="example2 grid intervals")
    p.add_argument("--target-seed", type=int, default=None, help="example1 coefficient seed")
    p.add_argument("--conventional-order", type=int, default=None)
    p.add_argument("--threshold", type=float, default=None, help="success threshold")
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("coherence-study", help="mean coherence over (d, k, M)")
    _common(p)
    p.add_argument("--dims", default="1..6")
    p.add_argument("--orders", default="1..6")
    p.add_argument("--sizes", default="100,200,300")
    p.set_defaults(func=cmd_coherence, trials=25)

    p = sub.add_parser("cv-epsilon", help="cross-validated tolerance selection")
    _common(p)
    _sample_source(p)
    p.add_argument("--taus", default="0.001,0.003,0.01,0.03,0.1,0.3")
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--order", type=int, default=2)
    p.add_argument("--dims", default=None)
    p.set_defaults(func=cmd_cv)
    return parser


def _load_config(path) -> dict:
    text = Path(path).read_text()
    data = json.loads(text) if str(path).endswith(".json") else yaml.safe_load(text)
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise CliError(f"{path}: configuration must be a mapping")
    return {k.replace("-", "_"): v for k, v in data.items()}


def parse_args(argv=None):
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    args = parser.parse_args(argv)
    if args.config:
        cfg = _load_config(args.config)
        sub = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest for a in sub._actions}
        unknown = sorted(set(cfg) - known)
        if unknown:
            raise CliError(f"unknown configuration keys: {', '.join(unknown)}")
        sub.set_defaults(**cfg)
        args = parser.parse_args(argv)
    flags = set(argv)
    args.solver_given = "--solver" in flags or (args.config and "solver" in _load_config(args.config))
    args.epsilon_rel_given = "--epsilon-rel" in flags or \
        (args.config and "epsilon_rel" in _load_config(args.config))
    return args


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        if args.trials is None and args.command != "benchmark":
            args.trials = 20
        if args.print_config:
            cfg = {k: v for k, v in vars(args).items()
                   if k not in ("func", "print_config") and not k.endswith("_given")}
            sys.stdout.write(json.dumps(_jsonable(cfg), indent=2, sort_keys=True) + "\n")
            return 0
        args.func(args)
        return 0
    except (CliError, SparsePCEError, ValueError, OSError) as exc:
        err = {"error": {"type": type(exc).__name__, "message": str(exc)}}
        sys.stderr.write(json.dumps(err) + "\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
