"""Manufactured polynomial targets with known Legendre coefficients."""
from __future__ import annotations

import math

import numpy as np

from ..basis import MultiIndexSet, evaluate_basis_matrix, total_degree_indices

SQRT3 = math.sqrt(3.0)


class ManufacturedTarget:
    """Sparse Legendre expansion ``u(xi) = sum_a c_a psi_a(xi)`` on [-1, 1]^d.

    Parameters
    ----------
    dim, order : int
        Ambient dimension and the largest total degree present.
    coefficients : dict
        Maps ambient multi-index tuples to coefficients.
    seed : int or None
        Generator seed the coefficients were drawn with, if any.
    """

    def __init__(self, dim, order, coefficients, seed=None, name="manufactured"):
        self.dim = int(dim)
        self.order = int(order)
        self.seed = seed
        self.name = name
        keys = [tuple(int(a) for a in k) for k in coefficients]
        if any(len(k) != self.dim for k in keys):
            raise ValueError("multi-index length does not match target dimension")
        self.exact_coefficients = {k: float(coefficients[k]) for k in keys}
        self._indices = MultiIndexSet(self.dim, self.order,
                                      np.array(keys, dtype=np.int64).reshape(-1, self.dim))
        self._values = np.array([self.exact_coefficients[k] for k in keys])

    def __call__(self, points):
        return self.evaluate(points)

    def evaluate(self, points):
        points = np.atleast_2d(points)
        return evaluate_basis_matrix(self._indices, points) @ self._values

    def coefficient_vector(self, basis: MultiIndexSet) -> np.ndarray:
        """Exact coefficients listed in the order of ``basis``."""
        return np.array([self.exact_coefficients.get(a, 0.0) for a in basis])

    def significant_dims(self, threshold=1e-3):
        """Inputs that appear in some coefficient of magnitude > threshold."""
        dims = set()
        for alpha, c in self.exact_coefficients.items():
            if abs(c) > threshold:
                dims.update(i for i, a in enumerate(alpha) if a)
        return sorted(dims)


def make_example1_target(seed, dim=10, order=4, n_significant=3,
                         small=1e-4) -> ManufacturedTarget:
    """10-dimensional 4th-order target concentrated on the first three inputs.

    Coefficients whose multi-index only involves the first ``n_significant``
    inputs are drawn from U(-exp(-|a|), exp(-|a|)); all others from
    U(-small, small).
    """
    basis = total_degree_indices(dim, order)
    alpha = basis.indices
    lead = ~np.any(alpha[:, n_significant:] > 0, axis=1)
    bound = np.where(lead, np.exp(-alpha.sum(axis=1).astype(float)), small)
    rng = np.random.default_rng(seed)
    values = rng.uniform(-bound, bound)
    coeffs = {a: v for a, v in zip(basis, values)}
    return ManufacturedTarget(dim, order, coeffs, seed=seed, name="example1")


class ChainTarget(ManufacturedTarget):
    """High-dimensional chain polynomial of total degree three.

    ``u = sum_{i<=K1} x_i + sum_{i<K1} x_i x_{i+1} + sum_{i<=K1-2} x_i x_{i+1} x_{i+2}
         + sum_{K1<i<=K} x_i / (5 (1+i)^2) + sum_{K1<i<K} x_i x_{i+1} / (3 (1+i)^2)``
    with 1-based i. Each monomial x = psi_1(x) / sqrt(3) is rewritten in the
    orthonormal Legendre frame for the exact coefficients.
    """

    def __init__(self, K1=5, K=80):
        if not 1 <= K1 < K:
            raise ValueError("need 1 <= K1 < K")
        self.K1, self.K = int(K1), int(K)
        coeffs = {}

        def put(ones, c):
            alpha = [0] * K
            for i in ones:
                alpha[i - 1] = 1
            coeffs[tuple(alpha)] = c / SQRT3 ** len(ones)

        for i in range(1, K1 + 1):
            put([i], 1.0)
        for i in range(1, K1):
            put([i, i + 1], 1.0)
        for i in range(1, K1 - 1):
            put([i, i + 1, i + 2], 1.0)
        for i in range(K1 + 1, K + 1):
            put([i], 1.0 / (5.0 * (1 + i) ** 2))
        for i in range(K1 + 1, K):
            put([i, i + 1], 1.0 / (3.0 * (1 + i) ** 2))
        super().__init__(K, 3, coeffs, name="example3")

    def evaluate(self, points):
        x = np.atleast_2d(np.asarray(points, dtype=float))
        K1, K = self.K1, self.K
        i = np.arange(1, K + 1, dtype=float)
        out = x[:, :K1].sum(axis=1)
        out += (x[:, :K1 - 1] * x[:, 1:K1]).sum(axis=1)
        if K1 >= 3:
            out += (x[:, :K1 - 2] * x[:, 1:K1 - 1] * x[:, 2:K1]).sum(axis=1)
        out += x[:, K1:K] @ (1.0 / (5.0 * (1 + i[K1:K]) ** 2))
        out += (x[:, K1:K - 1] * x[:, K1 + 1:K]) @ (1.0 / (3.0 * (1 + i[K1:K - 1]) ** 2))
        return out


def make_example3_target(K1=5, K=80) -> ChainTarget:
    return ChainTarget(K1, K)
