"""
Post-processing of recovered expansions: validation error, success
criteria, cross-validated tolerance selection, input importance over
trial ensembles and analytic Sobol' indices.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .basis import SampleSet, build_matrix, total_degree_indices
from .exceptions import InfeasibleError, SparsePCEError, ZeroVarianceError
from .solvers import SparseSolution, ToleranceSpec, bpdn, l1l2, least_squares

COEFFICIENT_THRESHOLD = 0.02
VALIDATION_THRESHOLD = 0.003
CHAIN_VALIDATION_THRESHOLD = 0.011
UNINFLUENTIAL_FRACTION = 0.15


class Criterion(str, enum.Enum):
    COEFFICIENT = "coefficient"
    VALIDATION = "validation"


DEFAULT_THRESHOLDS = {Criterion.COEFFICIENT: COEFFICIENT_THRESHOLD,
                      Criterion.VALIDATION: VALIDATION_THRESHOLD}


def relative_validation_error(solution: SparseSolution, validation: SampleSet) -> float:
    """``||u_hat - u||_2 / ||u||_2`` over the validation points."""
    u = validation.values
    norm = float(np.linalg.norm(u))
    if norm == 0:
        raise ZeroVarianceError("validation observations have zero norm")
    return float(np.linalg.norm(solution.predict(validation.points) - u) / norm)


def coefficient_error(solution: SparseSolution, exact: dict) -> float:
    """Relative coefficient error after embedding into the ambient basis.

    ``exact`` maps ambient multi-index tuples to coefficients; multi-indices
    missing on either side count as zero.
    """
    if not exact:
        raise ValueError("exact coefficients are empty")
    dim = len(next(iter(exact)))
    est = solution.with_ambient_dim(dim).ambient_coefficients()
    keys = set(exact) | set(est)
    diff = np.array([est.get(k, 0.0) - exact.get(k, 0.0) for k in keys])
    ref = np.array(list(exact.values()))
    norm = float(np.linalg.norm(ref))
    if norm == 0:
        raise ZeroVarianceError("exact coefficient vector is zero")
    return float(np.linalg.norm(diff) / norm)


def success(solution: SparseSolution, reference, criterion=Criterion.COEFFICIENT,
            threshold: float | None = None) -> bool:
    """Whether a recovery meets the coefficient or validation criterion.

    Parameters
    ----------
    reference : dict, object with ``exact_coefficients``, or SampleSet
        Exact ambient coefficients for the coefficient criterion, or a
        validation sample set for the validation criterion.
    threshold : float, optional
        Defaults to 0.02 (coefficient) or 0.003 (validation).
    """
    criterion = Criterion(criterion)
    thr = DEFAULT_THRESHOLDS[criterion] if threshold is None else float(threshold)
    if reference is None:
        raise ValueError(f"criterion {criterion.value!r} needs reference data")
    if criterion == Criterion.COEFFICIENT:
        exact = getattr(reference, "exact_coefficients", reference)
        if not isinstance(exact, dict):
            raise ValueError("coefficient criterion needs exact coefficients")
        return coefficient_error(solution, exact) <= thr
    if not isinstance(reference, SampleSet):
        raise ValueError("validation criterion needs a validation SampleSet")
    return relative_validation_error(solution, reference) <= thr


@dataclass(frozen=True)
class ValidationReport:
    relative_error: float
    n_validation: int
    success: bool
    criterion_tag: str

    def to_dict(self):
        return {"relative_error": self.relative_error, "n_validation": self.n_validation,
                "success": self.success, "criterion": self.criterion_tag}


def validation_report(solution: SparseSolution, validation: SampleSet,
                      exact: dict | None = None, criterion=Criterion.VALIDATION,
                      threshold: float | None = None) -> ValidationReport:
    """Validation error plus the success flag under ``criterion``."""
    criterion = Criterion(criterion)
    err = relative_validation_error(solution, validation)
    ref = exact if criterion == Criterion.COEFFICIENT else validation
    ok = success(solution, ref, criterion, threshold)
    return ValidationReport(err, validation.size, bool(ok), criterion.value)


# ---------------------------------------------------------------------------
# cross-validated tolerance

def _fold_indices(M, folds, seed):
    perm = np.random.Generator(np.random.PCG64(seed)).permutation(M)
    return [np.sort(f) for f in np.array_split(perm, folds)]


def basis_fitter(order: int, dims: Sequence[int] | None = None, method: str = "bpdn"):
    """Fit function ``(train, tol) -> SparseSolution`` on a fixed total-degree basis."""
    solvers = {"bpdn": bpdn, "l1l2": l1l2}
    if method not in solvers and method != "ls":
        raise ValueError(f"unknown method {method!r}")

    def fit(train: SampleSet, tol: ToleranceSpec) -> SparseSolution:
        use = tuple(range(train.dim)) if dims is None else tuple(dims)
        Psi = build_matrix(total_degree_indices(len(use), order), train, use)
        if method == "ls":
            return least_squares(Psi, train.values)
        return solvers[method](Psi, train.values, tol)

    return fit


def cv_error_curve(samples: SampleSet, tau_grid: Sequence[float], folds: int = 5,
                   fit: Callable | None = None, seed: int = 0) -> np.ndarray:
    """Mean held-out relative error for each relative tolerance in ``tau_grid``.

    Fits that fail (infeasible, rank deficient, ...) score +inf.
    """
    taus = np.asarray(tau_grid, dtype=float)
    if taus.size == 0 or np.any((taus <= 0) | (taus >= 1)):
        raise ValueError("tau_grid must be nonempty with values in (0, 1)")
    if folds < 2:
        raise ValueError("need at least two folds")
    if folds > samples.size - 1:
        raise ValueError("too many folds: a training fold would be empty")
    fit = fit or basis_fitter(2)
    parts = _fold_indices(samples.size, folds, seed)
    curve = np.zeros(taus.size)
    for f, held in enumerate(parts):
        train_rows = np.concatenate([p for g, p in enumerate(parts) if g != f])
        if train_rows.size == 0 or held.size == 0:
            raise ValueError("degenerate fold")
        train, test = samples.subset(train_rows), samples.subset(held)
        for t, tau in enumerate(taus):
            try:
                sol = fit(train, ToleranceSpec.rel(float(tau)))
                curve[t] += relative_validation_error(sol, test)
            except (SparsePCEError, np.linalg.LinAlgError):
                curve[t] = math.inf
    return curve / folds


def cross_validate_epsilon(samples: SampleSet, tau_grid: Sequence[float], folds: int = 5,
                           method: str = "bpdn", order: int = 2, dims=None,
                           fit: Callable | None = None, seed: int = 0) -> ToleranceSpec:
    """Pick the relative tolerance with the lowest k-fold held-out error.

    Ties go to the larger tolerance (sparser fit). ``fit`` overrides the
    default fixed-basis fitter built from ``method``, ``order`` and ``dims``.
    """
    fit = fit or basis_fitter(order, dims, method)
    taus = np.asarray(tau_grid, dtype=float)
    curve = cv_error_curve(samples, taus, folds, fit, seed)
    if np.all(np.isinf(curve)):
        raise InfeasibleError("every tolerance failed on some fold")
    best = np.min(curve)
    tied = taus[curve <= best]
    return ToleranceSpec.rel(float(np.max(tied)))


# ---------------------------------------------------------------------------
# importance over trial ensembles

@dataclass
class TrialEnsemble:
    """Incremental results over independent sample sets sharing one ambient dim."""

    results: list
    ambient_dim: int

    def __post_init__(self):
        for r in self.results:
            amb = r.solution.ambient_dim
            if amb is not None and amb != self.ambient_dim:
                raise ValueError("ensemble members disagree on the ambient dimension")

    def __len__(self):
        return len(self.results)

    @property
    def inclusion_orders(self) -> list:
        return [list(r.solution.active_dims) for r in self.results]


def importance_from_orders(orders: Sequence[Sequence[int]], d: int) -> np.ndarray:
    """``I_i = sum_j (d - a_ij) delta_ij / d`` with 1-based inclusion rank ``a_ij``."""
    out = np.zeros(int(d))
    for order in orders:
        for rank, i in enumerate(order, start=1):
            if not 0 <= i < d:
                raise ValueError(f"input index {i} outside ambient dimension {d}")
            out[i] += (d - rank) / d
    return out


def importance_metric(ensemble: TrialEnsemble) -> np.ndarray:
    return importance_from_orders(ensemble.inclusion_orders, ensemble.ambient_dim)


def selection_counts(orders: Sequence[Sequence[int]], d: int) -> np.ndarray:
    counts = np.zeros(int(d), dtype=int)
    for order in orders:
        counts[list(order)] += 1
    return counts


def influential_inputs(orders: Sequence[Sequence[int]], d: int,
                       min_fraction: float = UNINFLUENTIAL_FRACTION) -> list:
    """Inputs selected in at least ``ceil(min_fraction * N)`` of the N trials."""
    need = math.ceil(min_fraction * len(orders))
    return [int(i) for i in np.flatnonzero(selection_counts(orders, d) >= need)]


# ---------------------------------------------------------------------------
# Sobol' indices

def sobol_from_coefficients(indices, coefficients) -> dict:
    """First-order and total Sobol' indices of an orthonormal expansion.

    Parameters
    ----------
    indices : (K, d) int array
        Ambient multi-indices.
    coefficients : (K,) array

    Raises
    ------
    ZeroVarianceError
        When every non-constant coefficient vanishes.
    """
    alpha = np.atleast_2d(np.asarray(indices, dtype=int))
    c2 = np.asarray(coefficients, dtype=float) ** 2
    active = alpha > 0
    nonconst = active.any(axis=1)
    V = float(c2[nonconst].sum())
    if V <= 0:
        raise ZeroVarianceError("expansion has zero variance")
    only = active & (active.sum(axis=1) == 1)[:, None]
    return {"first_order": (c2 @ only) / V, "total": (c2 @ active) / V, "variance": V}


def sobol_indices(solution: SparseSolution, ambient_dim: int | None = None) -> dict:
    """Sobol' indices of a recovered expansion over the ambient inputs."""
    d = ambient_dim or solution.ambient_dim
    coeffs = solution.with_ambient_dim(d).ambient_coefficients() if d else \
        solution.ambient_coefficients()
    if not coeffs:
        raise ZeroVarianceError("expansion has zero variance")
    keys = list(coeffs)
    return sobol_from_coefficients(np.array(keys), np.array([coeffs[k] for k in keys]))
