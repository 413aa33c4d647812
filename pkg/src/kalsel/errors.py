"""Exception hierarchy shared by every kalsel module."""

from __future__ import annotations


class KalselError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(KalselError, ValueError):
    """Input contains non-finite entries or violates a structural invariant."""


class DimensionError(KalselError, ValueError):
    """Operands have incompatible shapes."""


class DomainError(KalselError, ValueError):
    """Scalar argument lies outside the documented domain."""


class SingularMatrixError(KalselError, ValueError):
    """A matrix that must be inverted is numerically singular."""


class SimplexError(KalselError, ValueError):
    """A probability vector is not on the simplex."""


class DetectabilityError(KalselError, ValueError):
    """A required detectability precondition fails the PBH test."""


class ConvergenceError(KalselError, RuntimeError):
    """Fixed-point iteration exhausted its budget.

    Attributes
    ----------
    residual : float
        Last observed residual, useful for diagnosing near-undetectable pairs.
    """

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (last residual {residual:.3e})")
        self.residual = residual


class InfeasibleDistributionError(KalselError, ValueError):
    """No finite domination ratio exists for the given sampling distribution.

    Attributes
    ----------
    candidate : int
        1-based index of the offending candidate sensor, when identified.
    """

    def __init__(self, message: str, candidate: int | None = None):
        if candidate is not None:
            message = f"{message} (candidate {candidate})"
        super().__init__(message)
        self.candidate = candidate


class InfeasibleSampleSizeError(KalselError, ValueError):
    """Sample count too small for the concentration machinery to apply.

    Attributes
    ----------
    min_sample_count : int
        Smallest sample count that would be feasible.
    """

    def __init__(self, message: str, min_sample_count: int):
        super().__init__(f"{message} (minimum feasible sample count {min_sample_count})")
        self.min_sample_count = min_sample_count


class OptimizationError(KalselError, RuntimeError):
    """The conic solver failed or every grid point was infeasible.

    Attributes
    ----------
    status : str
        Solver status string, or a summary of per-point failures.
    """

    def __init__(self, message: str, status: str = ""):
        super().__init__(f"{message} [{status}]" if status else message)
        self.status = status


class RejectionBudgetError(KalselError, RuntimeError):
    """Constrained rejection sampling exceeded its attempt budget.

    Attributes
    ----------
    alpha : float
        Analytic lower bound on the per-draw acceptance probability.
    expected_draws_bound : float
        1/alpha when alpha > 0, else ``inf``.
    """

    def __init__(self, message: str, alpha: float):
        bound = 1.0 / alpha if alpha > 0 else float("inf")
        super().__init__(f"{message} (acceptance bound {alpha:.3e}, expected draws <= {bound:.3e})")
        self.alpha = alpha
        self.expected_draws_bound = bound


class AssumptionError(KalselError, ValueError):
    """A sampling-constraint assumption (cap bounds, zero-mass caps) is violated."""


class ConfigError(KalselError, ValueError):
    """Experiment configuration is malformed or inconsistent."""


class GenerationError(KalselError, RuntimeError):
    """Random instance generation failed repeatedly (detectability never satisfied)."""
