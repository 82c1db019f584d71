"""
Custom exceptions for the toolkit.
"""
from typing import Optional


class AlignRLError(Exception):
    """Base exception for toolkit errors."""

    exit_code = 1

    def __init__(self, message: str, code: str = "ALIGNRL_ERROR"):
        self.message = message
        self.code = code
        super().__init__(self.message)


class UsageError(AlignRLError):
    """Raised when an operation is called outside its preconditions."""

    exit_code = 2

    def __init__(self, message: str = "Invalid usage"):
        super().__init__(message, "USAGE_ERROR")


class SpecValidationError(AlignRLError):
    """Raised when an environment spec is invalid or degenerate."""

    exit_code = 2

    def __init__(self, message: str = "Environment spec validation failed"):
        super().__init__(message, "SPEC_VALIDATION_ERROR")


class ArtifactIOError(AlignRLError):
    """Raised when an artifact file cannot be read or written."""

    exit_code = 3

    def __init__(self, message: str = "Artifact I/O failed", path: Optional[str] = None):
        self.path = path
        if path is not None and path not in message:
            message = f"{message}: {path}"
        super().__init__(message, "IO_ERROR")


class DatasetParseError(AlignRLError):
    """Raised when a line-delimited container holds a malformed record."""

    exit_code = 3

    def __init__(self, message: str = "Malformed record", record_index: Optional[int] = None):
        self.record_index = record_index
        if record_index is not None:
            message = f"record {record_index}: {message}"
        super().__init__(message, "PARSE_ERROR")


class VersionMismatchError(AlignRLError):
    """Raised when a container declares an unsupported format version."""

    exit_code = 3

    def __init__(self, found: object, expected: int, field: str = "format_version"):
        self.found = found
        self.expected = expected
        super().__init__(
            f"Unsupported {field} {found!r} (expected {expected})",
            "VERSION_MISMATCH",
        )


class NumericError(AlignRLError):
    """Raised when the model or a loss produces non-finite values."""

    exit_code = 4

    def __init__(self, message: str = "Non-finite value encountered", **context: object):
        self.context = context
        if context:
            details = ", ".join(f"{key}={value}" for key, value in context.items())
            message = f"{message} ({details})"
        super().__init__(message, "NUMERIC_ERROR")
