"""Exception taxonomy shared across the package.

The CLI maps these onto process exit codes: usage problems exit 1, data
problems (anything derived from :class:`DataError`) exit 2, and numeric
divergence during training exits 3.
"""


class TritrackError(Exception):
    """Base class for all errors raised by this package."""


class DataError(TritrackError):
    """Invalid input data: bad shapes, bad files, bad configuration."""


class DimensionError(DataError):
    """A vector or matrix does not have the required shape."""


class DegenerateCameraError(DataError):
    """Crop parameters make the weak-perspective lift undefined (s*b == 0)."""


class EmptyClipError(DataError):
    """An operation that needs at least one valid token got none."""


class TrainingDataError(DataError):
    """Training input carries no usable identity labels."""


class ConfigError(DataError):
    """A configuration value or file is invalid."""


class FormatError(DataError):
    """A serialized file cannot be parsed.

    ``line`` (1-based, JSON-Lines) or ``record`` (0-based, binary) pinpoint
    the offending entry when known.
    """

    def __init__(self, message, *, line=None, record=None):
        if line is not None:
            message = f"line {line}: {message}"
        elif record is not None:
            message = f"record {record}: {message}"
        super().__init__(message)
        self.line = line
        self.record = record


class ChecksumError(FormatError):
    """A binary payload is truncated or fails its integrity check."""


class VersionError(FormatError):
    """A file was written by an incompatible format version."""


class DivergenceError(TritrackError):
    """Training produced a non-finite loss. ``step`` is the failing step."""

    def __init__(self, message, step):
        super().__init__(f"{message} (step {step})")
        self.step = step
