"""Exception hierarchy shared across the package."""


class HDGError(Exception):
    """Base class for all package errors."""


class ConfigurationError(HDGError, ValueError):
    """Invalid user-supplied parameters (degree, geometry, config keys...)."""


class DomainError(HDGError, ValueError):
    """Evaluation requested outside an admissible domain."""


class ParseError(HDGError, ValueError):
    """Malformed input file. Carries the offending line number when known."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class NumericalError(HDGError, ArithmeticError):
    """Non-finite closure input or output, degenerate mobility."""


class AssemblyError(HDGError):
    """Singular or otherwise unusable element block."""

    def __init__(self, message, element=None):
        self.element = element
        if element is not None:
            message = f"element {element}: {message}"
        super().__init__(message)


class SolverError(HDGError):
    """Global linear solve or nonlinear iteration failure."""

    def __init__(self, message, history=None):
        self.history = history if history is not None else []
        super().__init__(message)
