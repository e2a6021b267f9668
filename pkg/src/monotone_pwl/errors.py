"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid user-supplied configuration (dimensions, weights, specs)."""


class ModelFileError(ValueError):
    """A model file could not be read back."""


class MalformedModelError(ModelFileError):
    pass


class ShapeMismatchError(ModelFileError):
    pass


class DataError(ValueError):
    """Input data that cannot be parsed or is unusable for the request."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class TaskMismatchError(ValueError):
    """Model task (regression/classification) does not match the data."""


class UndefinedMetricError(ValueError):
    """A metric is undefined for the given inputs (single class, zero variance)."""
