"""Mutual coherence and a brute-force restricted isometry constant."""
from __future__ import annotations

import itertools
import math

import numpy as np

from .basis import MeasurementMatrix
from .exceptions import BasisTooLargeError, CoherenceUndefinedError

RIP_ENUMERATION_CAP = 50_000


def _entries(matrix):
    if isinstance(matrix, MeasurementMatrix):
        return matrix.entries
    return np.asarray(matrix, dtype=float)


def normalize_columns(A):
    """Return (A / norms, norms); raises on zero-norm columns."""
    A = _entries(A)
    norms = np.linalg.norm(A, axis=0)
    if np.any(norms == 0):
        raise CoherenceUndefinedError("matrix has a zero-norm column")
    return A / norms, norms


def coherence(matrix, block: int = 2048) -> float:
    """Largest absolute cosine between two distinct columns.

    Works blockwise so that the full Gram matrix is never formed for wide
    dictionaries.
    """
    A = _entries(matrix)
    if A.ndim != 2 or A.shape[1] < 2:
        raise CoherenceUndefinedError("coherence needs at least two columns")
    Q, _ = normalize_columns(A)
    K = Q.shape[1]
    mu = 0.0
    for start in range(0, K, block):
        stop = min(start + block, K)
        G = np.abs(Q[:, start:stop].T @ Q)
        G[np.arange(stop - start), np.arange(start, stop)] = 0.0
        mu = max(mu, float(G.max()))
    return min(mu, 1.0)


def rip_constant_bruteforce(matrix, S: int, cap: int = RIP_ENUMERATION_CAP) -> float:
    """Restricted isometry constant of order S by exhaustive enumeration.

    Columns are normalized to unit length first. Every column subset of
    size 1..S is visited and the extreme eigenvalues of its Gram matrix
    bound the isometry defect. Exponential in S: intended as a test oracle
    on tiny matrices only.
    """
    Q, _ = normalize_columns(matrix)
    K = Q.shape[1]
    if S < 1:
        raise ValueError("S must be positive")
    S = min(S, K)
    total = sum(math.comb(K, s) for s in range(1, S + 1))
    if total > cap:
        raise BasisTooLargeError(
            f"{total} column subsets exceed the enumeration cap {cap}")
    G = Q.T @ Q
    delta = 0.0
    for s in range(1, S + 1):
        for cols in itertools.combinations(range(K), s):
            ev = np.linalg.eigvalsh(G[np.ix_(cols, cols)])
            delta = max(delta, 1.0 - ev[0], ev[-1] - 1.0)
    return float(delta)
