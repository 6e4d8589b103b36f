"""Exception types. The CLI maps them to exit codes."""


class DbnImputeError(Exception):
    """Base class for all package errors."""


class DatasetError(DbnImputeError, ValueError):
    """Invalid dataset, file contents, or model/data mismatch."""


class EnumerationCapError(DbnImputeError, RuntimeError):
    """A window has more joint completions than the enumeration cap allows."""

    def __init__(self, message, subject=None, t=None, size=None):
        super().__init__(message)
        self.subject = subject
        self.t = t
        self.size = size
