"""Exception hierarchy shared across the engine.

Every failure mode the file formats and numeric kernels can hit maps to a
distinct class so callers (and the CLI) can react per kind.
"""


class AvcsError(Exception):
    """Base class for all library errors."""


class InvalidInputError(AvcsError):
    """Malformed runtime input: dimension mismatch, empty grid, bad span."""


class InvalidConfigError(AvcsError):
    """Degenerate or inconsistent configuration."""


class NumericError(AvcsError):
    """Non-finite values produced or consumed by a numeric kernel."""


class FormatError(AvcsError):
    """Base class for binary container errors."""


class BadMagicError(FormatError):
    """File does not start with the expected magic bytes."""


class VersionMismatchError(FormatError):
    """Container version is not supported."""


class TruncatedPayloadError(FormatError):
    """Payload ends before the header-declared content is complete."""


class LabelRangeError(FormatError):
    """A stored label references a class id >= class_count."""
