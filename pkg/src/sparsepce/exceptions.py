"""Exception hierarchy shared by all sparsepce modules."""


class SparsePCEError(Exception):
    """Base class for all package errors."""


class BasisTooLargeError(SparsePCEError, OverflowError):
    """A requested basis (or brute-force enumeration) exceeds its size cap."""


class DomainError(SparsePCEError, ValueError):
    """Input coordinates fall outside the reference cube [-1, 1]^d."""


class DimensionError(SparsePCEError, ValueError):
    """Inconsistent dimensions between multi-indices, points or column maps."""


class CoherenceUndefinedError(SparsePCEError, ValueError):
    pass


class RankDeficientError(SparsePCEError, ArithmeticError):
    """Least-squares system is numerically rank deficient."""


class InfeasibleError(SparsePCEError):
    """No coefficient vector meets the residual tolerance."""


class ConvergenceError(SparsePCEError):
    """An iterative solver hit its iteration limit.

    ``best`` holds the best feasible iterate when one exists.
    """

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class ZeroVarianceError(SparsePCEError, ValueError):
    pass
