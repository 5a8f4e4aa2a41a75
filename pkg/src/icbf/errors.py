"""Exception types shared across the package."""


class IcbfError(Exception):
    """Base class for all package errors."""


class InvalidMatrix(IcbfError, ValueError):
    pass


class NonSimpleEigenvalue(IcbfError, ArithmeticError):
    """Raised when an eigenvalue derivative is requested at a (numerically) repeated eigenvalue."""

    def __init__(self, message, gap=None):
        super().__init__(message)
        self.gap = gap


class BeaconSingularity(IcbfError, ValueError):
    pass


class InvalidInput(IcbfError, ValueError):
    pass


class InvalidWeight(IcbfError, ValueError):
    pass


class SafetyViolation(IcbfError):
    """A barrier dropped below its violation tolerance, or eigenvalues coalesced under anti-crossing."""

    def __init__(self, message, step=None, record=None):
        super().__init__(message)
        self.step = step
        self.record = record


class ConfigError(IcbfError, ValueError):
    """Scenario configuration failed validation. ``field`` names the offending entry."""

    def __init__(self, message, field=None, line=None):
        super().__init__(message)
        self.field = field
        self.line = line
