"""Exception hierarchy.

Validation problems derive from ``ValueError`` (the CLI maps them to exit
code 2); numerical failures derive from ``NumericalError`` (exit code 3).
"""


class LatticeBathError(Exception):
    """Base class of all package errors."""


class ValidationError(LatticeBathError, ValueError):
    """Invalid input or configuration."""


class NumericalError(LatticeBathError, ArithmeticError):
    """A computation could not reach its accuracy target."""


class DegenerateBand(NumericalError):
    """The selected band touches another band at the requested k."""


class EmptySet(ValidationError):
    """The energy lies outside the band, so the resonant set is empty."""


class NearVanHove(ValidationError):
    """The energy is too close to a critical value of the dispersion."""


class VanHove(NumericalError):
    """Vanishing group velocity at a point that must be regular."""


class NonIntegerResidual(NumericalError):
    """Winding quadrature did not land close enough to an integer."""


class EpsilonTooLarge(ValidationError):
    """Tube radius exceeds the allowed fraction of the curvature radius."""


class CausticDirection(ValidationError):
    """Query direction coincides with a caustic direction."""


class NoResonantDirection(ValidationError):
    """No point of the resonant set radiates along the query direction."""


class QuadratureNotConverged(NumericalError):
    """Quadrature failed to reach the requested relative error.

    Attributes
    ----------
    estimate : float
        Last value obtained.
    error : float
        Estimated relative error of ``estimate``.
    """

    def __init__(self, msg, estimate=None, error=None):
        super().__init__(msg)
        self.estimate = estimate
        self.error = error


class FitUnreliable(NumericalError):
    """A least-squares fit has R^2 below the acceptance floor."""

    def __init__(self, msg, result=None):
        super().__init__(msg)
        self.result = result


class ClosedOrbit(ValidationError):
    """An open-orbit quantity was requested for a closed resonant curve."""


class EnergyDriftExceeded(NumericalError):
    """Semiclassical integration violated energy conservation."""


class NormDriftExceeded(NumericalError):
    """Time evolution lost unitarity beyond tolerance."""


class EmptySlice(ValidationError):
    """A population slice carries no weight or lies outside the lattice."""
