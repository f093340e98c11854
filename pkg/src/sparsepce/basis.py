"""
Total-degree multi-index sets and orthonormal Legendre bases on [-1, 1]^d.

All polynomials are normalized against the uniform density 1/2 per
coordinate, so every tensor-product basis function has unit variance and
E[psi_a psi_b] = delta_ab.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .exceptions import BasisTooLargeError, DimensionError, DomainError

DEFAULT_BASIS_CAP = 2_000_000
CLAMP_TOL = 1e-12


def cardinality(d: int, k: int) -> int:
    """Number of d-variate multi-indices with total degree <= k.

    Evaluates the binomial coefficient C(k + d, d) multiplicatively with
    exact integer arithmetic.
    """
    if d < 0 or k < 0:
        raise ValueError(f"need d >= 0 and k >= 0, got d={d}, k={k}")
    m = min(d, k)
    n = d + k
    out = 1
    for i in range(1, m + 1):
        out = out * (n - m + i) // i
    return out


@dataclass(frozen=True)
class MultiIndexSet:
    """Ordered total-degree set.

    ``indices`` is an integer array of shape (K, d). Rows are sorted by
    ascending total degree, then ascending lexicographic order within a
    degree. A zero-dimensional set holds the single empty multi-index.
    """

    dim: int
    max_order: int
    indices: np.ndarray = field(repr=False)

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        if idx.ndim != 2 or idx.shape[1] != self.dim:
            idx = idx.reshape(-1, self.dim) if self.dim else np.zeros((1, 0), np.int64)
        if np.any(idx < 0):
            raise ValueError("multi-index entries must be non-negative")
        idx.setflags(write=False)
        object.__setattr__(self, "indices", idx)

    def __len__(self):
        return self.indices.shape[0]

    def __iter__(self):
        return (tuple(int(v) for v in row) for row in self.indices)

    def __contains__(self, alpha):
        return self.position(alpha) is not None

    def __eq__(self, other):
        if not isinstance(other, MultiIndexSet):
            return NotImplemented
        return (self.dim == other.dim and self.max_order == other.max_order
                and np.array_equal(self.indices, other.indices))

    def __hash__(self):
        return hash((self.dim, self.max_order, self.indices.tobytes()))

    @property
    def orders(self) -> np.ndarray:
        """Total degree of every multi-index."""
        return self.indices.sum(axis=1)

    def position(self, alpha) -> int | None:
        alpha = tuple(int(a) for a in alpha)
        return self._lookup().get(alpha)

    def _lookup(self):
        try:
            return self.__dict__["_pos"]
        except KeyError:
            pos = {a: j for j, a in enumerate(self)}
            object.__setattr__(self, "_pos", pos)
            return pos

    def as_tuples(self) -> list[tuple[int, ...]]:
        return list(self)


def total_degree_indices(d: int, k: int, cap: int = DEFAULT_BASIS_CAP) -> MultiIndexSet:
    """Enumerate the total-degree set of dimension ``d`` and order ``k``.

    Raises
    ------
    BasisTooLargeError
        If the set would hold more than ``cap`` multi-indices.
    """
    if d < 0 or k < 0:
        raise ValueError(f"need d >= 0 and k >= 0, got d={d}, k={k}")
    if d == 0:
        return MultiIndexSet(0, k, np.zeros((1, 0), dtype=np.int64))
    size = cardinality(d, k)
    if size > cap:
        raise BasisTooLargeError(
            f"total-degree set (d={d}, k={k}) has {size} terms, cap is {cap}")
    blocks = []
    for n in range(k + 1):
        # multisets of size n over the d coordinates <-> |alpha| = n
        combos = list(itertools.combinations_with_replacement(range(d), n))
        block = np.zeros((len(combos), d), dtype=np.int64)
        if n:
            rows = np.repeat(np.arange(len(combos)), n)
            np.add.at(block, (rows, np.asarray(combos).ravel()), 1)
        # np.lexsort treats the last key as primary
        order = np.lexsort(block.T[::-1])
        blocks.append(block[order])
    return MultiIndexSet(d, k, np.vstack(blocks))


def _check_domain(x):
    x = np.asarray(x, dtype=float)
    if np.any(np.abs(x) > 1.0 + CLAMP_TOL) or not np.all(np.isfinite(x)):
        raise DomainError("coordinates must lie in [-1, 1]")
    return np.clip(x, -1.0, 1.0)


def legendre_table(x, n_max: int) -> np.ndarray:
    """Orthonormal Legendre values of degrees 0..n_max at every entry of x.

    Returns an array of shape ``x.shape + (n_max + 1,)``.
    """
    x = _check_domain(x)
    out = np.empty(x.shape + (n_max + 1,))
    out[..., 0] = 1.0
    if n_max >= 1:
        out[..., 1] = x
    for n in range(1, n_max):
        out[..., n + 1] = ((2 * n + 1) * x * out[..., n] - n * out[..., n - 1]) / (n + 1)
    out *= np.sqrt(2.0 * np.arange(n_max + 1) + 1.0)
    return out


def legendre_1d(n: int, x):
    """Orthonormal Legendre polynomial sqrt(2n+1) P_n(x)."""
    if n < 0:
        raise ValueError("degree must be non-negative")
    vals = legendre_table(x, n)[..., n]
    return float(vals) if np.ndim(vals) == 0 else vals


def eval_basis(alpha: Sequence[int], xi) -> float:
    """Tensor-product basis function psi_alpha at a single point."""
    alpha = np.asarray(alpha, dtype=int)
    xi = np.asarray(xi, dtype=float)
    if alpha.shape != xi.shape or alpha.ndim != 1:
        raise DimensionError(
            f"multi-index length {alpha.size} does not match point length {xi.size}")
    val = 1.0
    for a, x in zip(alpha, xi):
        val *= legendre_1d(int(a), x)
    return float(val)


@dataclass(frozen=True)
class SampleSet:
    """M input realizations in [-1, 1]^d with their observed outputs."""

    points: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        vals = np.asarray(self.values, dtype=float).ravel()
        if pts.shape[0] != vals.shape[0]:
            raise DimensionError(
                f"{pts.shape[0]} points but {vals.shape[0]} observations")
        pts = _check_domain(pts)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "values", vals)

    @property
    def size(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def subset(self, rows) -> "SampleSet":
        return SampleSet(self.points[rows], self.values[rows])


@dataclass(frozen=True)
class MeasurementMatrix:
    """Basis evaluations ``entries[i, j] = psi_{alpha_j}(xi_i[dims])``."""

    entries: np.ndarray
    basis: MultiIndexSet
    dims: tuple
    column_norms: np.ndarray

    @property
    def shape(self):
        return self.entries.shape


def evaluate_basis_matrix(basis: MultiIndexSet, points, dims=None) -> np.ndarray:
    """Raw (M, K) evaluation array; see :func:`build_matrix`."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if dims is None:
        if points.shape[1] != basis.dim:
            raise DimensionError(
                f"points have {points.shape[1]} coordinates, basis expects "
                f"{basis.dim}; pass a column-selection map")
        dims = tuple(range(basis.dim))
    dims = tuple(int(i) for i in dims)
    if len(dims) != basis.dim:
        raise DimensionError("column-selection map length must equal basis dimension")
    if any(i < 0 or i >= points.shape[1] for i in dims):
        raise DimensionError(
            f"column-selection map {dims} references a coordinate outside "
            f"0..{points.shape[1] - 1}")
    M, K = points.shape[0], len(basis)
    psi = np.ones((M, K))
    if basis.dim == 0 or basis.max_order == 0:
        return psi
    table = legendre_table(points[:, list(dims)], basis.max_order)
    alpha = basis.indices
    for j in range(basis.dim):
        nz = np.flatnonzero(alpha[:, j])
        if nz.size:
            psi[:, nz] *= table[:, j, alpha[nz, j]]
    return psi


def build_matrix(basis: MultiIndexSet, samples, dims=None) -> MeasurementMatrix:
    """Assemble the measurement matrix of ``basis`` at the sample points.

    Parameters
    ----------
    basis : MultiIndexSet
    samples : SampleSet or array of shape (M, D)
    dims : sequence of int, optional
        Which input coordinates feed the basis, in basis order. Required
        when the samples carry more coordinates than the basis.
    """
    points = samples.points if isinstance(samples, SampleSet) else samples
    entries = evaluate_basis_matrix(basis, points, dims)
    if dims is None:
        dims = tuple(range(basis.dim))
    entries.setflags(write=False)
    norms = np.linalg.norm(entries, axis=0)
    return MeasurementMatrix(entries, basis, tuple(int(i) for i in dims), norms)
