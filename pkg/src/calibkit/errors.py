"""Exception types shared across the package."""


class CalibkitError(Exception):
    """Base class for all calibkit errors."""


class InvalidInputError(CalibkitError):
    """Raised on non-finite or otherwise malformed numeric input."""


class ConfigError(CalibkitError):
    """Raised on invalid configuration: bad bounds, dimension mismatch, M = 0."""


class ClassCountMismatchError(ConfigError):
    """Raised when two datasets or a dataset and a model disagree on the number of classes."""


class EmptyDatasetError(CalibkitError):
    """Raised when an operation requires at least one record (or one non-empty class)."""


class InvalidModelError(CalibkitError):
    """Raised on calibration models violating their invariants (e.g. nonpositive temperature)."""


class OptimizationError(CalibkitError):
    """Raised when an optimizer encounters non-finite objective values or diverges."""

    def __init__(self, message: str, iterations: int | None = None):
        super().__init__(message)
        self.iterations = iterations


class DegenerateNoiseError(CalibkitError):
    """Raised for noise levels where the closed-form classifier has infinite logits."""


class FileFormatError(CalibkitError):
    """Raised on unparseable or invalid data files; carries a 1-based line number when known."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
