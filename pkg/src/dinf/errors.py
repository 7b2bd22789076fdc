"""Exception hierarchy shared by the library and the CLI."""


class DinfError(Exception):
    """Base class for every error raised by dinf."""


class ConfigError(DinfError, ValueError):
    """Invalid configuration: bad key, type, dimension, or divisibility."""


class ResourceError(DinfError):
    """A requested allocation exceeds the configured memory cap."""


class NumericDomainError(DinfError, ArithmeticError):
    """A jet primitive was evaluated at a singular point."""

    def __init__(self, op, detail=""):
        self.op = op
        msg = f"{op}: argument outside the differentiable domain"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class DivergedError(DinfError, FloatingPointError):
    """Training produced a non-finite loss, gradient, or field value."""


class DataError(DinfError, ValueError):
    """Input data is inconsistent with what an operation requires."""


class ParseError(DataError):
    """Malformed file content."""


class InternalError(DinfError, RuntimeError):
    """Broken internal invariant (a bug guard, not a user error)."""
