"""Sparse Legendre polynomial chaos recovery with an incremental basis search."""

__version__ = "0.1.0"

from .basis import (MeasurementMatrix, MultiIndexSet, SampleSet, build_matrix, cardinality,
                    eval_basis, evaluate_basis_matrix, legendre_1d, legendre_table,
                    total_degree_indices)
from .diagnostics import coherence, normalize_columns, rip_constant_bruteforce
from .exceptions import (BasisTooLargeError, CoherenceUndefinedError, ConvergenceError,
                         DimensionError, DomainError, InfeasibleError, RankDeficientError,
                         SparsePCEError, ZeroVarianceError)
from .incremental import (IncrementalConfig, IncrementalResult, IncrementalState, TrialScore,
                          evaluate_trial, run_incremental, select_increment)
from .metrics import (TrialEnsemble, ValidationReport, cross_validate_epsilon,
                      importance_metric, relative_validation_error, sobol_indices, success)
from .solvers import (SolverTag, SparseSolution, ToleranceSpec, bpdn, count_nonzeros, l1l2,
                      lasso, least_squares, support_enumeration_oracle)

__all__ = [
    "MeasurementMatrix", "MultiIndexSet", "SampleSet", "build_matrix", "cardinality",
    "eval_basis", "evaluate_basis_matrix", "legendre_1d", "legendre_table",
    "total_degree_indices", "coherence", "normalize_columns", "rip_constant_bruteforce",
    "BasisTooLargeError", "CoherenceUndefinedError", "ConvergenceError", "DimensionError",
    "DomainError", "InfeasibleError", "RankDeficientError", "SparsePCEError",
    "ZeroVarianceError", "IncrementalConfig", "IncrementalResult", "IncrementalState",
    "TrialScore", "evaluate_trial", "run_incremental", "select_increment", "TrialEnsemble",
    "ValidationReport", "cross_validate_epsilon", "importance_metric",
    "relative_validation_error", "sobol_indices", "success", "SolverTag", "SparseSolution",
    "ToleranceSpec", "bpdn", "count_nonzeros", "l1l2", "lasso", "least_squares",
    "support_enumeration_oracle",
]
