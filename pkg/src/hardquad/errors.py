"""Exception types shared across the package."""


class HardQuadError(Exception):
    """Base class for all package errors."""


class DomainError(HardQuadError, ValueError):
    """A scalar argument lies outside the mathematical domain of an operation."""


class InvalidDimensionError(HardQuadError, ValueError):
    """Requested problem dimension is too small."""


class DegenerateInstanceError(HardQuadError, RuntimeError):
    """The sampled objective matrix is numerically singular.

    Carries the seed of the offending draw so the harness can log and resample.
    """

    def __init__(self, message, seed=None):
        super().__init__(message)
        self.seed = seed


class ResolventPoleError(HardQuadError, ValueError):
    """Evaluation point lies inside (or too close to) the spectrum."""


class RankOneSingularityError(HardQuadError, ValueError):
    """Sherman-Morrison denominator is numerically zero."""


class BudgetExhaustedError(HardQuadError, RuntimeError):
    """A query was attempted after the session budget was spent."""


class DivergenceError(HardQuadError, RuntimeError):
    """An iterative solver blew up (misparameterized step or momentum)."""


class PreconditionError(HardQuadError, ValueError):
    """Inputs violate a documented precondition (e.g. inconsistent step size)."""


class SubThresholdError(DomainError):
    """Signal-to-noise ratio at or below the spectral detection threshold."""
