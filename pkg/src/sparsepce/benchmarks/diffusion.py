"""
Stochastic diffusion benchmark on the unit square.

The log-free random coefficient

    a(x, xi) = a0 + sigma * sum_i sqrt(lam_i) phi_i(x) xi_i

uses the leading Karhunen-Loeve pairs of the separable exponential kernel
exp(-(|x1 - y1| + |x2 - y2|) / l). The elliptic problem
div(a grad u) = 1 with u = 0 on the boundary is discretized with a
five-point conservative stencil and harmonic face averages, and the
quantity of interest is u at a fixed interior point.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ..exceptions import SparsePCEError

logger = logging.getLogger(__name__)


class SingularSystemError(SparsePCEError):
    """Diffusion coefficient is not positive on the grid."""


def _exp_kernel(x, y, corr_len):
    return np.exp(-np.abs(x[:, None] - y[None, :]) / corr_len)


@dataclass
class KLModes:
    """Leading 2-D KL pairs built from 1-D Nystrom eigenpairs.

    Attributes
    ----------
    eigenvalues : (d,) array, non-increasing
    pairs : (d, 2) int array
        1-D mode numbers (a, b) with phi = phi_a(x1) phi_b(x2).
    nodes : (n,) array
        1-D midpoint quadrature nodes on (0, 1).
    grid_values : (n, n, d) array
        Eigenfunctions on the tensor grid, normalized so that the cell-area
        quadrature of phi^2 equals one.
    """

    eigenvalues: np.ndarray
    pairs: np.ndarray
    nodes: np.ndarray
    grid_values: np.ndarray
    eig1d: np.ndarray = field(repr=False)
    vec1d: np.ndarray = field(repr=False)
    corr_len: float = 1.0
    captured_fraction: float = float("nan")

    def phi1d(self, mode, x):
        """Nystrom interpolation of a 1-D eigenfunction at arbitrary x."""
        x = np.asarray(x, dtype=float)
        h = 1.0 / self.nodes.size
        C = _exp_kernel(x.ravel(), self.nodes, self.corr_len)
        return ((C @ self.vec1d[:, mode]) * h / self.eig1d[mode]).reshape(x.shape)

    def evaluate(self, x1, x2):
        """All d eigenfunctions at points (x1, x2); returns shape (N, d)."""
        x1 = np.asarray(x1, dtype=float).ravel()
        x2 = np.asarray(x2, dtype=float).ravel()
        modes = np.unique(self.pairs)
        f1 = {m: self.phi1d(m, x1) for m in modes}
        f2 = {m: self.phi1d(m, x2) for m in modes}
        return np.stack([f1[a] * f2[b] for a, b in self.pairs], axis=1)


def kl_1d(n, corr_len=1.0):
    """Nystrom eigenpairs of exp(-|x - y| / l) on (0, 1) with n midpoints.

    Returns (eigenvalues, nodes, vectors) sorted by decreasing eigenvalue,
    with vectors scaled so that h * sum(phi^2) = 1 and phi >= 0 at the node
    nearest the origin.
    """
    h = 1.0 / n
    nodes = (np.arange(n) + 0.5) * h
    lam, vec = np.linalg.eigh(_exp_kernel(nodes, nodes, corr_len) * h)
    lam, vec = lam[::-1], vec[:, ::-1]
    vec = vec / np.sqrt(h)
    vec *= np.where(vec[0] < 0, -1.0, 1.0)
    return lam, nodes, vec


def kl_eigenpairs(n, corr_len=1.0, d=20) -> KLModes:
    """Leading ``d`` KL eigenpairs of the separable exponential kernel.

    Eigenvalues of the 2-D Nystrom operator are all products of the 1-D
    eigenvalues; equal products are ordered by their lexicographic 1-D
    mode pair.
    """
    if n < 16:
        raise ValueError("grid resolution must be at least 16")
    if d > n * n:
        raise ValueError("more modes requested than grid points")
    lam1, nodes, vec1 = kl_1d(n, corr_len)
    if np.any(lam1 < 0):
        neg = int(np.sum(lam1 < 0))
        warnings.warn(f"{neg} negative Nystrom eigenvalues clamped and excluded",
                      RuntimeWarning, stacklevel=2)
    keep = lam1 > 0
    lam1, vec1 = lam1[keep], vec1[:, keep]
    m = lam1.size
    prod = np.outer(lam1, lam1)
    a_idx, b_idx = np.meshgrid(np.arange(m), np.arange(m), indexing="ij")
    # descending product; ties -> ascending (a, b)
    order = np.lexsort((b_idx.ravel(), a_idx.ravel(), -prod.ravel()))[:d]
    pairs = np.column_stack([a_idx.ravel()[order], b_idx.ravel()[order]])
    eigenvalues = prod.ravel()[order]
    grid = vec1[:, pairs[:, 0]][:, None, :] * vec1[:, pairs[:, 1]][None, :, :]
    captured = float(eigenvalues.sum() / lam1.sum() ** 2)
    logger.info("KL truncation keeps %.4f of the discrete variance", captured)
    return KLModes(eigenvalues, pairs, nodes, grid, lam1, vec1, corr_len, captured)


class DiffusionModel:
    """QoI map xi -> u(x_qoi, xi) for the random-coefficient Poisson problem.

    Parameters
    ----------
    n : int
        Number of grid intervals per side (vertex grid, spacing 1/n).
    d : int
        Number of KL modes / random inputs.
    a0, sigma, corr_len : float
        Mean coefficient, KL amplitude and kernel correlation length.
    qoi_point : tuple
        Location at which the solution is read (bilinear interpolation).
    n_kl : int, optional
        Nystrom resolution for the KL basis; defaults to ``n``.
    """

    def __init__(self, n=64, d=20, a0=1.0, sigma=0.3, corr_len=1.0,
                 qoi_point=(0.61, 0.58), n_kl=None):
        self.n, self.d = int(n), int(d)
        self.a0, self.sigma, self.corr_len = float(a0), float(sigma), float(corr_len)
        self.qoi_point = tuple(qoi_point)
        self.modes = kl_eigenpairs(max(n_kl or n, 16), corr_len, d)
        xs = np.linspace(0.0, 1.0, self.n + 1)
        X1, X2 = np.meshgrid(xs, xs, indexing="ij")
        # (n+1)^2 x d matrix of eigenfunction values at grid vertices
        self._phi = self.modes.evaluate(X1.ravel(), X2.ravel())
        self._weights = self.sigma * np.sqrt(self.modes.eigenvalues)
        self.min_coefficient_bound = float(
            self.a0 - np.max(np.abs(self._phi) @ self._weights))
        self._setup_stencil()
        self._setup_qoi()

    @property
    def dim(self):
        return self.d

    def _setup_stencil(self):
        n = self.n
        m = n - 1
        ii, jj = np.meshgrid(np.arange(1, n), np.arange(1, n), indexing="ij")
        self._ii, self._jj = ii.ravel(), jj.ravel()
        self._row = (self._ii - 1) * m + (self._jj - 1)

    def _setup_qoi(self):
        n = self.n
        px, py = self.qoi_point
        i = min(int(np.floor(px * n)), n - 1)
        j = min(int(np.floor(py * n)), n - 1)
        tx, ty = px * n - i, py * n - j
        self._qoi_stencil = [((i, j), (1 - tx) * (1 - ty)), ((i + 1, j), tx * (1 - ty)),
                             ((i, j + 1), (1 - tx) * ty), ((i + 1, j + 1), tx * ty)]

    def coefficient(self, xi) -> np.ndarray:
        """Diffusion coefficient on the (n+1) x (n+1) vertex grid."""
        xi = np.asarray(xi, dtype=float)
        if xi.shape != (self.d,):
            raise ValueError(f"expected a point of length {self.d}")
        a = self.a0 + self._phi @ (self._weights * xi)
        return a.reshape(self.n + 1, self.n + 1)

    def operator(self, a):
        """SPD matrix of -div(a grad .) on interior vertices."""
        n, m = self.n, self.n - 1
        h2 = 1.0 / n ** 2
        ii, jj, row = self._ii, self._jj, self._row

        def face(i2, j2):
            a1, a2 = a[ii, jj], a[i2, j2]
            return 2.0 * a1 * a2 / (a1 + a2)

        aE, aW = face(ii + 1, jj), face(ii - 1, jj)
        aN, aS = face(ii, jj + 1), face(ii, jj - 1)
        rows, cols, vals = [row], [row], [(aE + aW + aN + aS) / h2]
        for coef, di, dj in ((aE, 1, 0), (aW, -1, 0), (aN, 0, 1), (aS, 0, -1)):
            i2, j2 = ii + di, jj + dj
            inner = (i2 >= 1) & (i2 <= m) & (j2 >= 1) & (j2 <= m)
            rows.append(row[inner])
            cols.append((i2[inner] - 1) * m + (j2[inner] - 1))
            vals.append(-coef[inner] / h2)
        return sp.csc_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                             shape=(m * m, m * m))

    def solve_field(self, xi, rhs=1.0) -> np.ndarray:
        """Full solution on the vertex grid (boundary rows included)."""
        a = self.coefficient(xi)
        if np.min(a) <= 0:
            raise SingularSystemError("diffusion coefficient is not positive on the grid")
        m = self.n - 1
        # div(a grad u) = rhs  <=>  (-div a grad) u = -rhs
        u_in = spla.spsolve(self.operator(a), -float(rhs) * np.ones(m * m))
        u = np.zeros((self.n + 1, self.n + 1))
        u[1:-1, 1:-1] = u_in.reshape(m, m)
        return u

    def qoi_from_field(self, u) -> float:
        return float(sum(w * u[i, j] for (i, j), w in self._qoi_stencil))

    def solve(self, xi, rhs=1.0) -> float:
        return self.qoi_from_field(self.solve_field(xi, rhs))

    def __call__(self, points):
        points = np.atleast_2d(points)
        return np.array([self.solve(p) for p in points])


def solve_diffusion(model: DiffusionModel, xi, rhs=1.0) -> float:
    """Quantity of interest for one realization of the random inputs."""
    return model.solve(xi, rhs)
