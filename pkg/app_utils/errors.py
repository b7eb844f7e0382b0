"""Exception hierarchy shared by the engine, persistence and CLI layers."""


class NVGradError(Exception):
    """Base class for all simulator errors"""


class ValidationError(NVGradError, ValueError):
    """Raised when an input violates an operation's precondition"""


class DomainError(NVGradError, ValueError):
    """Raised when a field sampler is evaluated outside its valid region"""


class NumericError(NVGradError, RuntimeError):
    """Base class for numerical failures"""


class ConvergenceError(NumericError):
    """Raised when an iterative solver does not converge"""


class DegenerateDataError(NumericError):
    """Raised when data carries no usable signal (flat, featureless)"""


class ConfigError(NVGradError):
    """Raised for invalid run configuration documents"""


class OutputIOError(NVGradError, OSError):
    """Raised for file I/O failures, always with the offending path"""
