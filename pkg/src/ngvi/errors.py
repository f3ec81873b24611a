"""Exception hierarchy shared by every module."""


class NGVIError(Exception):
    """Base class for all errors raised by :mod:`ngvi`."""


class DomainViolation(NGVIError, ValueError):
    """A parameter lies outside the interior of its domain."""


class WrongFamily(NGVIError, ValueError):
    """An operation received a parameter of an unsupported family kind."""


class DimensionMismatch(NGVIError, ValueError):
    pass


class InvalidConstraint(NGVIError, ValueError):
    pass


class InvalidArgument(NGVIError, ValueError):
    pass


class NoConvergence(NGVIError, RuntimeError):
    pass


class ModelCapabilityMissing(NGVIError, TypeError):
    """The target model does not expose what the caller needs."""


class NonFiniteGradient(NGVIError, FloatingPointError):
    pass


class NonFiniteValue(NGVIError, FloatingPointError):
    pass


class WellPosednessViolated(NGVIError, ArithmeticError):
    """An update left the interior of the natural-parameter domain."""

    def __init__(self, message, t=None):
        super().__init__(message)
        self.t = t


class ConfigError(NGVIError, ValueError):
    pass


class SchemaError(NGVIError, ValueError):
    pass


class ParseError(NGVIError, ValueError):
    def __init__(self, message, row=None):
        super().__init__(message)
        self.row = row


class EmptyInput(NGVIError, ValueError):
    pass


class MisalignedTraces(NGVIError, ValueError):
    pass


class IoError(NGVIError, OSError):
    pass
