"""Exception hierarchy for the package.

Verification routines raise InvariantViolation subclasses carrying the
offending report, so callers can distinguish "the math broke" from
configuration or numerical plumbing failures.
"""


class BSTransferError(Exception):
    """Base class for all package errors."""


class ConfigurationError(BSTransferError):
    """Invalid or unsupported configuration (CLI exit code 2)."""


class InvalidMapError(BSTransferError):
    """Mobius coefficients violate the unit determinant condition."""


class InvariantViolation(BSTransferError):
    """A verified identity exceeded its tolerance.

    The optional ``report`` attribute holds the measurement that failed.
    """

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class EvenCornerError(InvariantViolation):
    """Side geodesic extensions are not covered by translate sides."""


class DegeneratePartitionError(BSTransferError):
    """Coarse partition has coincident or invalid endpoints."""


class NoFiniteMarkovOrbitError(BSTransferError):
    """Cut point refinement failed to stabilize (non Markov orbit)."""


class BakerConstructionError(BSTransferError):
    """Incidence data violates the baker structure requirements."""


class DomainError(BSTransferError):
    """Input outside the domain of the requested dynamical map."""


class BranchConsistencyError(BSTransferError):
    """Inverse branch image escapes its defining arc."""


class SpuriousMinimumError(BSTransferError):
    """Determinant minimum with no eigenvalue near 1."""


class ConjugacySearchError(BSTransferError):
    """No conjugating word found within the word length bound."""


class DegenerateTransferError(BSTransferError):
    """Kernel transfer produced a numerically zero function."""


class NumericalIntegrationError(BSTransferError):
    """Quadrature failed to converge to the requested tolerance."""


class DegenerateRoundTripError(BSTransferError):
    """Round trip comparison has no usable signal to fit against."""


class TangencyWarning(RuntimeWarning):
    """Geodesic within tolerance of tangency to a polygon side."""
