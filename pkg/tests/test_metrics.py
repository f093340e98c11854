import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.polynomial import legendre as npleg

from sparsepce.basis import SampleSet, build_matrix, total_degree_indices
from sparsepce.benchmarks import make_example1_target, uniform_points, uniform_samples
from sparsepce.exceptions import ZeroVarianceError
from sparsepce.incremental import run_incremental
from sparsepce.metrics import (Criterion, TrialEnsemble, basis_fitter, coefficient_error,
                               cross_validate_epsilon, cv_error_curve, importance_from_orders,
                               importance_metric, influential_inputs, relative_validation_error,
                               sobol_from_coefficients, sobol_indices, success,
                               validation_report)
from sparsepce.solvers import SolverTag, SparseSolution, ToleranceSpec, least_squares


def solution_from(basis, coeffs, dims=None, d=None):
    dims = tuple(range(basis.dim)) if dims is None else tuple(dims)
    c = np.asarray(coeffs, dtype=float)
    return SparseSolution(c, basis, dims, 0.0, int(np.count_nonzero(c)), SolverTag.LS,
                          ambient_dim=d)


def test_validation_error_exact_and_zero():
    tgt = make_example1_target(1)
    v = uniform_samples(10, 50, 7, tgt)
    basis = total_degree_indices(10, 4)
    exact = solution_from(basis, tgt.coefficient_vector(basis))
    assert relative_validation_error(exact, v) == pytest.approx(0.0, abs=1e-12)
    zero = solution_from(basis, np.zeros(len(basis)))
    assert relative_validation_error(zero, v) == pytest.approx(1.0)
    with pytest.raises(ZeroVarianceError):
        relative_validation_error(zero, SampleSet(v.points, np.zeros(50)))


def test_validation_error_permutation_invariant():
    tgt = make_example1_target(2)
    v = uniform_samples(10, 40, 3, tgt)
    basis = total_degree_indices(3, 2)
    sol = solution_from(basis, np.linspace(0.1, 1, len(basis)), d=10)
    perm = np.random.default_rng(0).permutation(40)
    assert relative_validation_error(sol, v) == pytest.approx(
        relative_validation_error(sol, v.subset(perm)), rel=1e-14)


def test_success_criteria():
    tgt = make_example1_target(0)
    basis = total_degree_indices(10, 4)
    exact = solution_from(basis, tgt.coefficient_vector(basis), d=10)
    assert success(exact, tgt, Criterion.COEFFICIENT)
    assert coefficient_error(exact, tgt.exact_coefficients) == pytest.approx(0.0, abs=1e-15)
    zero = solution_from(basis, np.zeros(len(basis)), d=10)
    assert not success(zero, tgt.exact_coefficients)
    v = uniform_samples(10, 30, 1, tgt)
    assert success(exact, v, "validation")
    assert not success(zero, v, "validation", threshold=0.5)
    with pytest.raises(ValueError):
        success(exact, None)
    with pytest.raises(ValueError):
        success(exact, tgt, Criterion.VALIDATION)
    rep = validation_report(exact, v)
    assert rep.success and rep.n_validation == 30 and rep.criterion_tag == "validation"


def test_coefficient_error_embeds_reduced_solution():
    exact = {(0, 0, 0): 1.0, (0, 1, 0): 0.5}
    basis = total_degree_indices(1, 1)
    sol = solution_from(basis, [1.0, 0.5], dims=(1,), d=3)
    assert coefficient_error(sol, exact) == pytest.approx(0.0)
    sol = solution_from(basis, [1.0, 0.5], dims=(2,), d=3)
    assert coefficient_error(sol, exact) == pytest.approx(np.sqrt(0.5) / np.sqrt(1.25))


def test_importance_examples():
    assert importance_from_orders([[3]], 10)[3] == pytest.approx(0.9)
    imp = importance_from_orders([[0, 2], [2]], 4)
    np.testing.assert_allclose(imp, [0.75, 0.0, 0.5 + 0.75, 0.0])
    with pytest.raises(ValueError):
        importance_from_orders([[5]], 4)


@settings(max_examples=30, deadline=None)
@given(data=st.data(), d=st.integers(2, 8))
def test_importance_permutation_equivariant_and_bounded(data, d):
    n = data.draw(st.integers(1, 6))
    orders = [data.draw(st.permutations(range(d)).map(lambda p: list(p)[:data.draw(
        st.integers(0, d))])) for _ in range(n)]
    perm = data.draw(st.permutations(range(d)))
    imp = importance_from_orders(orders, d)
    relabeled = [[perm[i] for i in o] for o in orders]
    imp2 = importance_from_orders(relabeled, d)
    np.testing.assert_allclose(imp2[list(perm)], imp)
    assert np.all((imp >= 0) & (imp <= n))


def test_importance_metric_from_ensemble():
    tgt = make_example1_target(0)
    results = [run_incremental(uniform_samples(10, 100, s, tgt)) for s in range(3)]
    ens = TrialEnsemble(results, 10)
    imp = importance_metric(ens)
    assert set(np.argsort(-imp)[:3]) == {0, 1, 2}
    assert influential_inputs(ens.inclusion_orders, 10) == [0, 1, 2]


def sobol_quadrature_oracle(alpha, coeffs, n=8):
    """Variance decomposition by tensor Gauss-Legendre integration."""
    d = alpha.shape[1]
    x, w = npleg.leggauss(n)
    w = w / 2
    grid = np.array(list(itertools.product(x, repeat=d)))
    vals = np.ones((grid.shape[0], len(coeffs)))
    for j, a in enumerate(alpha):
        for i in range(d):
            vals[:, j] *= npleg.Legendre.basis(a[i])(grid[:, i]) * np.sqrt(2 * a[i] + 1)
    f = (vals @ coeffs).reshape((n,) * d)
    W = np.ones((n,) * d)
    for i in range(d):
        W = W * w.reshape([n if a == i else 1 for a in range(d)])
    mean = (W * f).sum()
    V = (W * (f - mean) ** 2).sum()
    first, total = [], []
    for i in range(d):
        other = tuple(a for a in range(d) if a != i)
        # E[f | x_i] and E[f | x_~i]
        cond_i = (W * f).sum(axis=other) / w
        first.append(w @ (cond_i - mean) ** 2 / V)
        w_rest = W.sum(axis=i)
        cond_rest = (W * f).sum(axis=i) / w_rest
        total.append(1 - (w_rest * (cond_rest - mean) ** 2).sum() / V)
    return np.array(first), np.array(total)


def test_sobol_matches_quadrature_oracle():
    basis = total_degree_indices(3, 3)
    coeffs = np.random.default_rng(5).normal(size=len(basis))
    got = sobol_from_coefficients(basis.indices, coeffs)
    first, total = sobol_quadrature_oracle(basis.indices, coeffs)
    np.testing.assert_allclose(got["first_order"], first, atol=1e-10)
    np.testing.assert_allclose(got["total"], total, atol=1e-10)


def test_sobol_examples():
    basis = total_degree_indices(2, 2)
    c = np.zeros(len(basis))
    c[basis.position((0, 0))] = 3.0
    c[basis.position((1, 0))] = 2.0
    out = sobol_indices(solution_from(basis, c, d=2))
    np.testing.assert_allclose(out["first_order"], [1, 0])
    np.testing.assert_allclose(out["total"], [1, 0])
    c = np.zeros(len(basis))
    c[basis.position((1, 1))] = 1.0
    out = sobol_indices(solution_from(basis, c, d=2))
    np.testing.assert_allclose(out["first_order"], [0, 0])
    np.testing.assert_allclose(out["total"], [1, 1])
    c = np.zeros(len(basis))
    c[0] = 1.0
    with pytest.raises(ZeroVarianceError):
        sobol_indices(solution_from(basis, c, d=2))


def test_sobol_of_example1_ranks_constructed_inputs():
    for seed in range(5):
        tgt = make_example1_target(seed)
        keys = list(tgt.exact_coefficients)
        out = sobol_from_coefficients(np.array(keys), [tgt.exact_coefficients[k] for k in keys])
        assert set(np.argsort(-out["total"])[:3]) == {0, 1, 2}


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), d=st.integers(1, 5))
def test_sobol_bounds(seed, d):
    basis = total_degree_indices(d, 3)
    c = np.random.default_rng(seed).normal(size=len(basis))
    out = sobol_from_coefficients(basis.indices, c)
    f, t = out["first_order"], out["total"]
    assert np.all(f >= -1e-15) and np.all(f <= t + 1e-12) and np.all(t <= 1 + 1e-12)
    assert f.sum() <= 1 + 1e-12


def test_cv_noiseless_sparse_selects_smallest_tau():
    s = uniform_samples(3, 60, 0, lambda p: 1 + p[:, 0] + 0.5 * p[:, 1] * p[:, 2])
    taus = [0.001, 0.01, 0.1, 0.3]
    tol = cross_validate_epsilon(s, taus, folds=5, order=2)
    assert tol.relative and tol.value == 0.001


def test_cv_pure_noise_prefers_large_tau():
    taus = [0.01, 0.1, 0.3, 0.5, 0.7, 0.9]
    picks = []
    for seed in range(20):
        rng = np.random.default_rng(seed)
        s = SampleSet(uniform_points(3, 40, seed), rng.normal(size=40))
        picks.append(cross_validate_epsilon(s, taus, folds=4, order=3, seed=seed).value)
    assert np.median(picks) >= 0.7


def test_cv_curve_minimizer_and_fold_checks():
    tgt = make_example1_target(0)
    s = uniform_samples(10, 60, 3, tgt)
    taus = [0.005, 0.02, 0.1, 0.3]
    fit = basis_fitter(3, dims=(0, 1, 2))
    curve = cv_error_curve(s, taus, 4, fit, seed=1)
    tol = cross_validate_epsilon(s, taus, 4, fit=fit, seed=1)
    assert curve[taus.index(tol.value)] == np.min(curve)
    with pytest.raises(ValueError):
        cv_error_curve(s, taus, 1, fit)
    with pytest.raises(ValueError):
        cv_error_curve(s, [1.5], 3, fit)
    with pytest.raises(ValueError):
        cv_error_curve(s.subset([0, 1, 2]), taus, 3, fit)


def test_ls_fitter():
    s = uniform_samples(2, 30, 0, lambda p: p[:, 0] * p[:, 1])
    sol = basis_fitter(2, method="ls")(s, ToleranceSpec.rel(0.1))
    ref = least_squares(build_matrix(total_degree_indices(2, 2), s), s.values)
    np.testing.assert_allclose(sol.coefficients, ref.coefficients)
