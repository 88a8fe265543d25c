"""Exception hierarchy shared by all samm_lab modules."""


class SammError(Exception):
    """Base class for library errors."""


class DomainError(SammError, ValueError):
    """An input lies outside the domain of an operation (e.g. draining a pool)."""


class ParameterError(SammError, ValueError):
    """A configuration or parameter value is invalid."""


class InfeasibleError(SammError):
    """No feasible point exists (fee parameters, trade demand, ...)."""


class IllegalTradeError(DomainError):
    """A trade violates the constant-product invariant."""


class TraceFormatError(SammError, ValueError):
    """A trace file could not be parsed."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
