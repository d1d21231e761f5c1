"""Exception hierarchy shared across the package."""


class SelvioError(Exception):
    """Base class for all package-specific errors."""


class DimensionError(SelvioError):
    """Operand shapes are incompatible with an operation."""


class DomainError(SelvioError):
    """An input lies outside an operation's mathematical domain."""


class ParameterError(SelvioError):
    """A configuration value or argument is invalid."""


class ContractError(SelvioError):
    """A call violates an operation's usage contract."""


class UnsupportedModeError(ContractError):
    """The requested analysis does not apply to this fusion mode."""


class FormatError(SelvioError):
    """A serialized file is malformed, truncated, or carries a bad version."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class NumericalError(SelvioError):
    """Training or evaluation produced non-finite values."""
