import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.polynomial import legendre as npleg

from sparsepce.basis import (SampleSet, build_matrix, cardinality, eval_basis,
                             evaluate_basis_matrix, legendre_1d, legendre_table,
                             total_degree_indices)
from sparsepce.exceptions import BasisTooLargeError, DimensionError, DomainError


def brute_force_indices(d, k):
    """Independent enumeration: filter the full tensor grid by total degree."""
    cands = [a for a in itertools.product(range(k + 1), repeat=d) if sum(a) <= k]
    return sorted(cands, key=lambda a: (sum(a), a))


def test_cardinality_spot_values():
    assert cardinality(10, 4) == 1001
    assert cardinality(80, 3) == 91_881
    assert cardinality(0, 5) == 1
    assert cardinality(3, 0) == 1


@pytest.mark.parametrize("d", range(1, 6))
@pytest.mark.parametrize("k", range(0, 5))
def test_indices_match_brute_force(d, k):
    got = total_degree_indices(d, k).as_tuples()
    assert got == brute_force_indices(d, k)
    assert len(got) == math.comb(d + k, k)


def test_orders_never_decrease_and_constant_first():
    basis = total_degree_indices(4, 3)
    assert np.all(np.diff(basis.orders) >= 0)
    assert basis.as_tuples()[0] == (0, 0, 0, 0)


def test_nesting_in_order_is_a_prefix():
    for d in range(1, 5):
        for k in range(0, 4):
            small = total_degree_indices(d, k).as_tuples()
            big = total_degree_indices(d, k + 1).as_tuples()
            assert big[:len(small)] == small


def test_nesting_in_dimension_is_an_ordered_subsequence():
    for d in range(1, 4):
        for k in range(1, 4):
            small = [a + (0,) for a in total_degree_indices(d, k)]
            big = total_degree_indices(d + 1, k).as_tuples()
            pos = [big.index(a) for a in small]
            assert pos == sorted(pos)


def test_zero_dimensional_basis_is_the_constant():
    basis = total_degree_indices(0, 2)
    assert len(basis) == 1
    psi = evaluate_basis_matrix(basis, np.zeros((5, 3)), dims=())
    np.testing.assert_array_equal(psi, np.ones((5, 1)))


def test_basis_cap():
    with pytest.raises(BasisTooLargeError):
        total_degree_indices(20, 6, cap=1000)


def test_position_lookup():
    basis = total_degree_indices(3, 3)
    for j, a in enumerate(basis):
        assert basis.position(a) == j
    assert basis.position((4, 0, 0)) is None
    assert (1, 1, 1) in basis


def test_legendre_matches_numpy_oracle():
    x = np.linspace(-1, 1, 41)
    for n in range(10):
        ref = npleg.Legendre.basis(n)(x) * math.sqrt(2 * n + 1)
        np.testing.assert_allclose(legendre_1d(n, x), ref, atol=1e-12)


def test_orthonormality_gauss_legendre():
    nodes, weights = npleg.leggauss(32)
    table = legendre_table(nodes, 8)
    gram = (table * (weights / 2)[:, None]).T @ table
    np.testing.assert_allclose(gram, np.eye(9), atol=1e-12)


def test_domain_clamp_and_rejection():
    assert legendre_1d(3, 1.0 + 5e-13) == pytest.approx(math.sqrt(7))
    with pytest.raises(DomainError):
        legendre_1d(2, 1.001)
    with pytest.raises(DomainError):
        legendre_table(np.array([np.nan]), 2)


def test_eval_basis_single_point():
    xi = np.array([0.3, -0.7, 0.1])
    alpha = (2, 0, 1)
    expected = legendre_1d(2, 0.3) * legendre_1d(1, 0.1)
    assert eval_basis(alpha, xi) == pytest.approx(expected, rel=1e-14)
    with pytest.raises(DimensionError):
        eval_basis((1, 2), xi)


def test_matrix_with_column_selection():
    rng = np.random.default_rng(3)
    pts = rng.uniform(-1, 1, (7, 6))
    basis = total_degree_indices(2, 3)
    Psi = build_matrix(basis, SampleSet(pts, np.zeros(7)), dims=(4, 1))
    for i in range(7):
        for j, a in enumerate(basis):
            assert Psi.entries[i, j] == pytest.approx(eval_basis(a, pts[i, [4, 1]]), rel=1e-12)
    assert Psi.shape == (7, 10)
    with pytest.raises(DimensionError):
        build_matrix(basis, pts)
    with pytest.raises(DimensionError):
        build_matrix(basis, pts, dims=(0, 9))


def test_sample_set_validation():
    with pytest.raises(DimensionError):
        SampleSet(np.zeros((3, 2)), np.zeros(4))
    with pytest.raises(DomainError):
        SampleSet(np.full((2, 2), 1.5), np.zeros(2))
    s = SampleSet(np.zeros((4, 2)), np.arange(4.0))
    assert s.size == 4 and s.dim == 2
    assert s.subset([1, 3]).values.tolist() == [1.0, 3.0]


@settings(max_examples=40, deadline=None)
@given(d=st.integers(1, 5), k=st.integers(0, 4))
def test_indices_are_unique_and_bounded(d, k):
    basis = total_degree_indices(d, k)
    assert len(basis) == cardinality(d, k)
    assert len(set(basis.as_tuples())) == len(basis)
    assert basis.orders.max() <= k
    assert basis.indices.min() >= 0


@settings(max_examples=30, deadline=None)
@given(x=st.floats(-1, 1), n=st.integers(0, 12))
def test_legendre_bounded_by_endpoint_value(x, n):
    assert abs(legendre_1d(n, x)) <= math.sqrt(2 * n + 1) * (1 + 1e-12)
