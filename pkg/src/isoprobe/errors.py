class IsoprobeError(Exception):
    """Base class for all errors raised by isoprobe."""


class ContractError(IsoprobeError, ValueError):
    """An input violates a documented precondition (CLI exit code 2)."""


class DumpFormatError(ContractError):
    """A dump or dataset file is malformed."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class NumericalError(IsoprobeError, ArithmeticError):
    """A numerical routine failed (CLI exit code 3)."""


class IsoprobeWarning(UserWarning):
    """Recoverable degeneracies: skipped pairs, singleton clusters, collapsed buckets."""
