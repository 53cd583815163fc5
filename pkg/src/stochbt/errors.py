"""Exception types shared across the package."""


class StochbtError(Exception):
    """Base class for all package-specific errors."""


class DimensionMismatchError(StochbtError, ValueError):
    """Operands have incompatible shapes."""


class DomainError(StochbtError, ValueError):
    """Argument lies outside the admissible parameter domain."""


class SystemFormatError(StochbtError, ValueError):
    """A system file could not be parsed.  `field` names the offending entry."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class NotPositiveDefiniteError(StochbtError, ArithmeticError):
    """A Cholesky pivot fell at or below tolerance.

    `pivot_index` is the zero-based index of the failing pivot,
    `pivot_value` its value before the square root.
    """

    def __init__(self, message, pivot_index=None, pivot_value=None):
        super().__init__(message)
        self.pivot_index = pivot_index
        self.pivot_value = pivot_value


class DecompositionError(StochbtError, ArithmeticError):
    """An eigenvalue or singular-value iteration failed to converge."""


class SingularOperatorError(StochbtError, ArithmeticError):
    """The vectorized Lyapunov operator is singular at working precision."""


class NumericalError(StochbtError, ArithmeticError):
    """A solve finished but violated its residual contract."""


class NotStableError(StochbtError, ArithmeticError):
    """The system is not asymptotically mean-square stable."""


class SingularGramianError(StochbtError, ArithmeticError):
    """A Gramian failed the positive-definiteness check.

    Usually means the system is not fully reachable or observable;
    `min_eigenvalue` carries the smallest eigenvalue found.
    """

    def __init__(self, message, min_eigenvalue=None):
        super().__init__(message)
        self.min_eigenvalue = min_eigenvalue


class NearZeroSigmaError(StochbtError, ArithmeticError):
    """The singular-value spectrum collapses; balancing is ill-conditioned."""


class BracketFailureError(StochbtError, ArithmeticError):
    """A bisection could not establish a valid starting bracket."""


class InfeasibleStartError(StochbtError, ArithmeticError):
    """No strictly feasible starting point for the interior-point solve."""


class LineSearchStallError(StochbtError, ArithmeticError):
    """Backtracking line search shrank the step below 1e-14."""


class MaxIterationsError(StochbtError, ArithmeticError):
    """Iteration limit exhausted before reaching the requested tolerance."""


class StabilityLostError(StochbtError, ArithmeticError):
    """A truncated system failed the mean-square stability test."""


class StepInstabilityError(StochbtError, ArithmeticError):
    """Moment propagation is inconsistent under step halving; dt too large."""
