"""
Batch studies: mutual coherence grids and paired comparisons between the
incremental search and conventional fixed-basis recovery.

Every trial draws its samples from a generator keyed on (seed, M), so a
trial's outcome depends only on its own seed; both methods of a pair see
identical samples.
"""
from __future__ import annotations

import logging
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from typing import Callable, Sequence

import numpy as np

from .basis import SampleSet, build_matrix, total_degree_indices
from .benchmarks import (DiffusionModel, make_example1_target,
                         make_example3_target, uniform_points)
from .diagnostics import coherence
from .exceptions import InfeasibleError, SparsePCEError
from .incremental import IncrementalConfig, run_incremental
from .metrics import (CHAIN_VALIDATION_THRESHOLD, COEFFICIENT_THRESHOLD,
                      VALIDATION_THRESHOLD, Criterion, coefficient_error,
                      relative_validation_error)
from .solvers import ToleranceSpec, bpdn, l1l2, least_squares

logger = logging.getLogger(__name__)

VALIDATION_STREAM = 1
TRAINING_STREAM = 0
N_VALIDATION = 200


def training_points(d, M, seed):
    return uniform_points(d, M, [int(seed), TRAINING_STREAM, int(M)])


def validation_points(d, n, seed):
    return uniform_points(d, n, [int(seed), VALIDATION_STREAM])


# ---------------------------------------------------------------------------
# coherence grid

def coherence_study(dims: Sequence[int], orders: Sequence[int], sample_sizes: Sequence[int],
                    seeds: Sequence[int]) -> np.ndarray:
    """Mean coherence of Legendre dictionaries, shape (len(M), len(d), len(k)).

    For a given seed and M all (d, k) pairs share one point set (the first
    d coordinates of a max(d)-dimensional draw), so the dictionaries are
    nested column subsets of one another.
    """
    dmax = max(dims)
    out = np.zeros((len(sample_sizes), len(dims), len(orders)))
    for m, M in enumerate(sample_sizes):
        for seed in seeds:
            pts = training_points(dmax, M, seed)
            samples = SampleSet(pts, np.zeros(M))
            for a, d in enumerate(dims):
                for b, k in enumerate(orders):
                    Psi = build_matrix(total_degree_indices(d, k), samples, range(d))
                    out[m, a, b] += coherence(Psi)
    return out / len(seeds)


# ---------------------------------------------------------------------------
# benchmark problems

@dataclass
class Benchmark:
    """A target with the settings of its paired comparison study."""

    name: str
    target: Callable
    dim: int
    tolerance: ToleranceSpec
    conventional_order: int
    criterion: Criterion
    threshold: float
    sample_sizes: tuple
    n_trials: int
    exact: dict | None = None
    solver: str = "bpdn"
    incremental: dict = field(default_factory=dict)

    def describe(self) -> dict:
        return {"name": self.name, "dim": self.dim, "tolerance": self.tolerance.to_dict(),
                "conventional_order": self.conventional_order,
                "criterion": self.criterion.value, "threshold": self.threshold,
                "sample_sizes": list(self.sample_sizes), "n_trials": self.n_trials,
                "solver": self.solver, "incremental": dict(self.incremental)}


def make_benchmark(name: str, **overrides) -> Benchmark:
    """Named benchmark: example1, example1-l1l2, example2 or example3.

    Keyword overrides replace fields of the default setup; ``target_seed``
    (example1), ``K``/``K1`` (example3) and ``grid``/``d`` (example2)
    reshape the target itself.
    """
    if name in ("example1", "example1-l1l2"):
        target = make_example1_target(overrides.pop("target_seed", 0))
        bench = Benchmark(name, target, 10, ToleranceSpec.rel(0.01), 4, Criterion.COEFFICIENT,
                          COEFFICIENT_THRESHOLD, (100, 150, 200, 250, 300), 20,
                          exact=target.exact_coefficients,
                          solver="l1l2" if name.endswith("l1l2") else "bpdn")
        if name.endswith("l1l2"):
            bench.sample_sizes = (100,)
    elif name == "example3":
        target = make_example3_target(overrides.pop("K1", 5), overrides.pop("K", 80))
        bench = Benchmark(name, target, target.dim, ToleranceSpec.rel(0.01), 2,
                          Criterion.VALIDATION, CHAIN_VALIDATION_THRESHOLD,
                          (100, 200, 300), 20, exact=target.exact_coefficients)
    elif name == "example2":
        model = DiffusionModel(n=overrides.pop("grid", 64), d=overrides.pop("d", 20))
        bench = Benchmark(name, model, model.dim, ToleranceSpec.rel(0.002), 2,
                          Criterion.VALIDATION, VALIDATION_THRESHOLD, (120, 200), 10)
    else:
        raise ValueError(f"unknown benchmark {name!r}")
    for key, value in overrides.items():
        if not hasattr(bench, key):
            raise ValueError(f"unknown benchmark setting {key!r}")
        setattr(bench, key, value)
    bench.sample_sizes = tuple(int(m) for m in bench.sample_sizes)
    return bench


# ---------------------------------------------------------------------------
# one trial

SOLVERS = {"bpdn": bpdn, "l1l2": l1l2}


def conventional_fit(samples: SampleSet, order: int, tol: ToleranceSpec, solver="bpdn"):
    """Fit on the full total-degree basis over every input.

    Returns ``(solution, failed)``. A sparse solve that cannot meet the
    tolerance falls back to the least-squares fit and is reported failed.
    """
    basis = total_degree_indices(samples.dim, order)
    Psi = build_matrix(basis, samples)
    if solver == "ls":
        return least_squares(Psi, samples.values).with_ambient_dim(samples.dim), False
    try:
        return SOLVERS[solver](Psi, samples.values, tol).with_ambient_dim(samples.dim), False
    except InfeasibleError:
        return least_squares(Psi, samples.values).with_ambient_dim(samples.dim), True


def _score(record, sol, bench, validation):
    record["relative_error"] = relative_validation_error(sol, validation)
    if bench.exact is not None:
        record["coefficient_error"] = coefficient_error(sol, bench.exact)
    if bench.criterion == Criterion.COEFFICIENT:
        value = record["coefficient_error"]
    else:
        value = record["relative_error"]
    record["success"] = bool(not record["failed"] and value <= bench.threshold)
    record["nnz"] = int(sol.nnz)
    record["active_dims"] = [int(i) for i in sol.active_dims]
    record["d_star"] = len(sol.active_dims)
    record["k_star"] = int(sol.basis.max_order)
    record["residual_norm"] = float(sol.residual_norm)


def run_trial(bench: Benchmark, M: int, seed: int, methods=("incremental", "conventional"),
              validation: SampleSet | None = None) -> list:
    """Paired records for one (M, seed) combination."""
    pts = training_points(bench.dim, M, seed)
    samples = SampleSet(pts, np.asarray(bench.target(pts), dtype=float))
    if validation is None:
        vpts = validation_points(bench.dim, N_VALIDATION, seed)
        validation = SampleSet(vpts, np.asarray(bench.target(vpts), dtype=float))
    out = []
    for method in methods:
        rec = {"benchmark": bench.name, "method": method, "solver": bench.solver,
               "M": int(M), "seed": int(seed), "failed": False, "truncated": False,
               "error": None}
        try:
            if method == "incremental":
                cfg = IncrementalConfig(epsilon=bench.tolerance, solver=bench.solver,
                                        record_coefficients=False, **bench.incremental)
                res = run_incremental(samples, cfg)
                sol = res.solution
                rec["truncated"] = res.truncated
                rec["coherence_trace"] = [[t["coherence"] for t in step["trials"]]
                                          for step in res.trace]
            elif method == "conventional":
                sol, rec["failed"] = conventional_fit(samples, bench.conventional_order,
                                                      bench.tolerance, bench.solver)
            else:
                raise ValueError(f"unknown method {method!r}")
            _score(rec, sol, bench, validation)
        except SparsePCEError as exc:
            rec.update(failed=True, success=False, error=f"{type(exc).__name__}: {exc}",
                       relative_error=None, nnz=None, d_star=None, k_star=None,
                       active_dims=None)
        out.append(rec)
    return out


def _seed_records(bench, seed, sizes, methods):
    vpts = validation_points(bench.dim, N_VALIDATION, seed)
    validation = SampleSet(vpts, np.asarray(bench.target(vpts), dtype=float))
    out = []
    for M in sizes:
        out.extend(run_trial(bench, M, seed, methods, validation))
        logger.info("%s seed=%d M=%d done", bench.name, seed, M)
    return out


def run_comparison(bench: Benchmark, seeds: Sequence[int] | None = None,
                   sample_sizes: Sequence[int] | None = None,
                   methods=("incremental", "conventional"), workers: int = 1) -> list:
    """Records for every (seed, M, method); validation data is shared across M.

    With ``workers > 1`` seeds run in separate processes; records come back
    in seed order either way.
    """
    seeds = list(range(bench.n_trials)) if seeds is None else list(seeds)
    sizes = bench.sample_sizes if sample_sizes is None else tuple(sample_sizes)
    job = partial(_seed_records, bench, sizes=sizes, methods=tuple(methods))
    if workers > 1 and len(seeds) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(job, seeds))
    else:
        parts = [job(seed) for seed in seeds]
    return [rec for part in parts for rec in part]


def _mean(xs):
    xs = [x for x in xs if x is not None]
    return float(np.mean(xs)) if xs else None


def aggregate(records: Sequence[dict]) -> dict:
    """Per-method, per-M means: the four panels of a comparison figure.

    Failed trials count as unsuccessful and are left out of the means.
    """
    groups = defaultdict(list)
    for r in sorted(records, key=lambda r: (r["method"], r["M"], r["seed"])):
        groups[(r["method"], r["M"])].append(r)
    out = defaultdict(dict)
    for (method, M), rs in sorted(groups.items()):
        out[method][str(M)] = {
            "n_trials": len(rs),
            "success_rate": float(np.mean([bool(r.get("success")) for r in rs])),
            "mean_relative_error": _mean([r.get("relative_error") for r in rs]),
            "mean_nnz": _mean([r.get("nnz") for r in rs]),
            "mean_d_star": _mean([r.get("d_star") for r in rs]),
            "n_failed": int(sum(bool(r.get("failed")) for r in rs)),
        }
    return dict(out)


def inclusion_orders(records: Sequence[dict], M: int | None = None) -> list:
    """Active-dimension lists of incremental records in seed order."""
    rs = [r for r in records if r["method"] == "incremental" and r.get("active_dims") is not None
          and (M is None or r["M"] == M)]
    return [r["active_dims"] for r in sorted(rs, key=lambda r: (r["M"], r["seed"]))]
