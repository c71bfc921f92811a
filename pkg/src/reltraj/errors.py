"""Exception hierarchy shared by the library and the command line."""


class ReltrajError(Exception):
    """Base class for every error raised by this package."""


class ConfigurationError(ReltrajError, ValueError):
    """Invalid parameters, grid specification, or run configuration."""


class ShapeError(ReltrajError, ValueError):
    """A field does not match the grid it is applied to."""


class NumericalBreakdown(ReltrajError, ArithmeticError):
    """The evolution left the domain where the equations make sense."""


class MetricDegeneracyError(NumericalBreakdown):
    """The spatial metric became non-positive somewhere on a leaf.

    Attributes
    ----------
    tau : float or None
        Ensemble time at which the violation was detected.
    index : int
        Grid index of the first offending trajectory.
    """

    def __init__(self, message, tau=None, index=None):
        super().__init__(message)
        self.tau = tau
        self.index = index


class NonFiniteFieldError(NumericalBreakdown):
    """A derived field (Q, its gradient, the forces) is NaN or infinite."""


class StepSizeUnderflow(NumericalBreakdown):
    """The adaptive integrator could not find an acceptable step."""


class LightConeViolation(NumericalBreakdown):
    """A trajectory reached or exceeded the speed of light."""


class SpanError(ReltrajError, ValueError):
    """A requested ensemble time or slice lies outside the integrated span."""


class VerificationFailure(ReltrajError):
    """A verification metric exceeded its tolerance."""
