"""Typed errors shared across the toolkit."""


class AppleYieldError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(AppleYieldError):
    """Input violates a documented precondition or schema."""


class InsufficientDataError(AppleYieldError):
    """Too few samples for the requested model size."""


class NumericalError(AppleYieldError):
    """Conditioning failure beyond the regularization floor."""


class NotFoundError(AppleYieldError):
    """Referenced id does not exist."""


class FormatError(AppleYieldError):
    """File failed to parse or carries an incompatible version tag."""

    def __init__(self, message, path=None, line=None):
        ctx = ""
        if path is not None:
            ctx = f" [{path}" + (f":{line}" if line is not None else "") + "]"
        super().__init__(message + ctx)
        self.path = path
        self.line = line
