"""Exception hierarchy shared by the library and the CLI."""


class CogurError(Exception):
    """Base class for all library errors."""


class ConfigurationError(CogurError, ValueError):
    """Invalid parameters or configuration document."""


class ShapeError(CogurError, ValueError):
    """Array sizes do not match the geometry or basis."""


class ResourceError(CogurError):
    """Requested discretization exceeds desk-scale limits."""


class NumericalError(CogurError, ArithmeticError):
    """Solver failure, non-finite values or detected instability."""


class UnsupportedParameterError(ConfigurationError):
    """Parameter combination outside the supported model class."""


class InadmissibleKernelError(ConfigurationError):
    """Memory kernel violates positivity or monotonicity."""


class ValidationError(CogurError):
    """A run configuration failed one of the model validators.

    ``reasons`` lists every failing condition by name.
    """

    def __init__(self, reasons):
        self.reasons = list(reasons)
        super().__init__("; ".join(self.reasons))
