"""End-to-end acceptance checks, one test per numbered criterion.

Each test records a PASS/FAIL line that the terminal summary prints. Run
``python tests/test_acceptance.py`` to execute only this file.
"""
import itertools
import json
import time

import numpy as np
import pytest
from numpy.polynomial import legendre as npleg

from sparsepce.basis import cardinality, legendre_table, total_degree_indices
from sparsepce.benchmarks import DiffusionModel, kl_eigenpairs, uniform_samples
from sparsepce.diagnostics import coherence, normalize_columns, rip_constant_bruteforce
from sparsepce.experiments import (aggregate, coherence_study, inclusion_orders, make_benchmark,
                                   run_comparison)
from sparsepce.incremental import IncrementalConfig, run_incremental
from sparsepce.metrics import importance_from_orders, sobol_from_coefficients
from sparsepce.solvers import ToleranceSpec, bpdn, support_enumeration_oracle

SEEDS = list(range(20))


def top3(values):
    return set(np.argsort(-np.asarray(values), kind="stable")[:3].tolist())


# ---------------------------------------------------------------- 1-5: core properties

def test_criterion_01_orthonormality(criterion):
    t0 = time.perf_counter()
    x, w = npleg.leggauss(32)
    P = legendre_table(x, 8)
    gram = P.T @ (P * (w / 2)[:, None])
    dev = float(np.max(np.abs(gram - np.eye(9))))
    dt = time.perf_counter() - t0
    criterion(1, dev <= 1e-12 and dt < 1.0,
              f"max |<psi_m, psi_n> - delta_mn| = {dev:.2e} (tol 1e-12), {dt:.3f} s")


def compositions(d, k):
    """All d-tuples of non-negative integers with sum <= k, by recursion."""
    if d == 0:
        yield ()
        return
    for a in range(k + 1):
        for rest in compositions(d - 1, k - a):
            yield (a,) + rest


def test_criterion_02_cardinality(criterion):
    bad = [(d, k) for d in range(1, 11) for k in range(7)
           if not cardinality(d, k) == len(total_degree_indices(d, k))
           == sum(1 for _ in compositions(d, k))]
    spot = (cardinality(10, 4), cardinality(80, 3), len(total_degree_indices(80, 3)))
    ok = not bad and spot == (1001, 91881, 91881)
    criterion(2, ok, f"mismatches {bad}; spot values {spot} (want 1001, 91881, 91881)")


def test_criterion_03_coherence_monotonicity(criterion):
    t0 = time.perf_counter()
    dk = list(range(1, 7))
    grid = coherence_study(dk, dk, [100, 300], list(range(25)))
    dt = time.perf_counter() - t0
    mu100, mu300 = grid[0], grid[1]
    in_k = bool(np.all(np.diff(mu100, axis=1) >= 0))
    in_d = bool(np.all(np.diff(mu100, axis=0) >= 0))
    in_M = bool(np.all(mu300 <= mu100))
    criterion(3, in_k and in_d and in_M and dt < 120,
              f"non-decreasing in k: {in_k}, in d: {in_d}; mu(300) <= mu(100): {in_M}; "
              f"{dt:.1f} s")


def oracle_instance(seed):
    rng = np.random.default_rng([seed, 4])
    A, _ = normalize_columns(rng.normal(size=(8, 12)))
    s = 1 + seed % 3
    c = np.zeros(12)
    c[rng.choice(12, s, replace=False)] = rng.normal(size=s)
    return A, c, A @ c


def test_criterion_04_oracle_equivalence(criterion):
    t0 = time.perf_counter()
    tol = ToleranceSpec.absolute(1e-8)
    agree, coef_ok = 0, True
    for seed in range(50):
        A, _, u = oracle_instance(seed)
        b = bpdn(A, u, tol)
        o = support_enumeration_oracle(A, u, tol, 3)
        if set(b.support) == set(o.support):
            agree += 1
            coef_ok &= bool(np.max(np.abs(b.coefficients - o.coefficients)) <= 1e-6)
    dt = time.perf_counter() - t0
    criterion(4, agree >= 45 and coef_ok and dt < 60,
              f"supports agree {agree}/50 (need 45); coefficients within 1e-6: {coef_ok}; "
              f"{dt:.1f} s")


def test_criterion_05_proposition_bound(criterion):
    rng = np.random.default_rng(5)
    held, checks = 0, 0
    for _ in range(100):
        M = int(rng.integers(4, 9))
        K = int(rng.integers(M + 1, 13))
        A, _ = normalize_columns(rng.normal(size=(M, K)))
        mu = coherence(A)
        ok = True
        for S in range(1, 5):
            if S < 1 / mu + 1:
                checks += 1
                ok &= rip_constant_bruteforce(A, S) <= (S - 1) * mu + 1e-10
        held += ok
    criterion(5, held == 100, f"bound holds for {held}/100 matrices ({checks} (matrix, S) pairs)")


# ---------------------------------------------------------------- 6, 10: example 1

@pytest.fixture(scope="module")
def example1_run():
    bench = make_benchmark("example1")
    t0 = time.perf_counter()
    records = run_comparison(bench, seeds=SEEDS)
    return bench, records, time.perf_counter() - t0


def test_criterion_06_example1_orderings(criterion, example1_run):
    bench, records, dt = example1_run
    agg = aggregate(records)
    inc, con = agg["incremental"], agg["conventional"]
    Ms = [str(M) for M in bench.sample_sizes]
    a = all(inc[M]["mean_relative_error"] <= con[M]["mean_relative_error"] for M in Ms)
    b = all(inc[M]["mean_nnz"] <= con[M]["mean_nnz"] for M in Ms)
    c = all(inc[M]["mean_d_star"] <= 5 for M in Ms if int(M) >= 200)
    d = all(inc[M]["success_rate"] >= con[M]["success_rate"] for M in Ms)
    err = ", ".join(f"{M}: {inc[M]['mean_relative_error']:.4f}/{con[M]['mean_relative_error']:.4f}"
                    for M in Ms)
    criterion(6, a and b and c and d and dt < 1800,
              f"(a) error {a} [{err}] (b) nnz {b} (c) d_star {c} (d) success {d}; {dt:.0f} s")


def test_criterion_10_importance(criterion, example1_run):
    bench, records, _ = example1_run
    per_M = {}
    pooled_ok = True
    for M in bench.sample_sizes:
        hits = 0
        for seed in SEEDS:
            orders = [r["active_dims"] for r in records if r["method"] == "incremental"
                      and r["M"] == M and r["seed"] == seed and r["active_dims"] is not None]
            hits += bool(orders) and top3(importance_from_orders(orders, bench.dim)) == {0, 1, 2}
        per_M[M] = hits
        pooled = importance_from_orders(inclusion_orders(records, M), bench.dim)
        pooled_ok &= top3(pooled) == {0, 1, 2}
    exact = bench.exact
    keys = list(exact)
    sobol = sobol_from_coefficients(np.array(keys), [exact[k] for k in keys])
    sobol_ok = top3(sobol["total"]) == {0, 1, 2}
    ok = all(h >= 18 for h in per_M.values()) and pooled_ok and sobol_ok
    criterion(10, ok, f"single-seed top-3 hits per M {per_M} (need 18/20); pooled {pooled_ok}; "
                      f"Sobol total ranking {sobol_ok}")


# ---------------------------------------------------------------- 7-9: other studies

def test_criterion_07_example3(criterion):
    bench = make_benchmark("example3", K=20, K1=3)
    t0 = time.perf_counter()
    records = run_comparison(bench, seeds=SEEDS, sample_sizes=(100, 200, 300))
    dt = time.perf_counter() - t0
    agg = aggregate(records)
    late = [r for r in records if r["method"] == "incremental" and r["M"] >= 200]
    k_ok = all(r["k_star"] == 3 for r in late)
    err = {M: agg["incremental"][str(M)]["mean_relative_error"] for M in (200, 300)}
    err_ok = all(v <= 0.011 for v in err.values())
    shown = {M: round(v, 5) for M, v in err.items()}
    conv = {M: agg["conventional"][M]["success_rate"] for M in agg["conventional"]}
    conv_ok = all(v == 0 for v in conv.values())
    criterion(7, k_ok and err_ok and conv_ok and dt < 1200,
              f"k_star=3 for M>=200: {k_ok}; incremental error {shown} (<= 0.011); "
              f"conventional success {conv}; {dt:.0f} s")


def test_criterion_08_example2(criterion):
    bench = make_benchmark("example2")
    t0 = time.perf_counter()
    records = run_comparison(bench, seeds=list(range(10)), sample_sizes=(120, 200))
    dt = time.perf_counter() - t0
    agg = aggregate(records)
    inc, con = agg["incremental"], agg["conventional"]
    err = {M: (inc[M]["mean_relative_error"], con[M]["mean_relative_error"]) for M in inc}
    a = all(i <= c for i, c in err.values())
    err = {M: (round(i, 5), round(c, 5)) for M, (i, c) in err.items()}
    dstar = {M: inc[M]["mean_d_star"] for M in inc}
    b = all(v < 20 for v in dstar.values())
    criterion(8, a and b and dt < 2700,
              f"(a) incremental <= conventional error {a} {err}; (b) mean d_star < 20 {b} "
              f"{dstar}; {dt:.0f} s")


def test_criterion_09_l1l2(criterion):
    bench = make_benchmark("example1-l1l2")
    t0 = time.perf_counter()
    records = run_comparison(bench, seeds=SEEDS, sample_sizes=(100,))
    dt = time.perf_counter() - t0
    agg = aggregate(records)
    i = agg["incremental"]["100"]["mean_relative_error"]
    c = agg["conventional"]["100"]["mean_relative_error"]
    criterion(9, i <= c, f"mean validation error incremental {i:.4f} vs conventional {c:.4f}; "
                         f"{dt:.0f} s")


# ---------------------------------------------------------------- 11-12

def test_criterion_11_determinism(criterion):
    bench = make_benchmark("example1")
    traces = []
    for _ in range(2):
        s = uniform_samples(bench.dim, 100, [3, 0, 100], bench.target)
        traces.append(run_incremental(s, IncrementalConfig(epsilon=bench.tolerance)).trace_json())
    same = traces[0].encode() == traces[1].encode()
    criterion(11, same and len(json.loads(traces[0])) > 1,
              f"byte-identical trace JSON: {same} ({len(traces[0])} bytes)")


def test_criterion_12_diffusion_convergence(criterion):
    xi = np.zeros(20)
    q64 = DiffusionModel(n=64).solve(xi)
    q128 = DiffusionModel(n=128).solve(xi)
    change = abs(q128 - q64) / abs(q128)
    n, d = 32, 20
    modes = kl_eigenpairs(n, 1.0, d)
    h = 1.0 / n
    p = np.array(list(itertools.product(modes.nodes, modes.nodes)))
    C = np.exp(-(np.abs(p[:, None, 0] - p[None, :, 0]) + np.abs(p[:, None, 1] - p[None, :, 1])))
    full = np.sort(np.linalg.eigvalsh(C * h * h))[::-1][:d]
    lam_dev = float(np.max(np.abs(full - modes.eigenvalues)))
    phi = modes.grid_values.reshape(n * n, d)
    vec_dev = float(np.max(np.abs((C * h * h) @ phi - phi * modes.eigenvalues)))
    ok = change < 0.005 and lam_dev <= 1e-8 and vec_dev <= 1e-8
    criterion(12, ok, f"QoI n=64 {q64:.6f}, n=128 {q128:.6f}, change {100 * change:.3f}% "
                      f"(< 0.5%); separability eigenvalue dev {lam_dev:.1e}, "
                      f"eigenfunction residual {vec_dev:.1e} (<= 1e-8)")


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-v"]))
