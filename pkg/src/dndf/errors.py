"""Exception hierarchy.

Everything a caller can fix by changing inputs derives from ``ValidationError``
(CLI exit code 1); numeric and training failures derive from ``RuntimeFailure``
(CLI exit code 2).
"""


class ValidationError(ValueError):
    """Invalid input, configuration or file contents."""


class SchemaError(ValidationError):
    """A required column or field is missing or unexpected."""

    def __init__(self, message, column=None):
        super().__init__(message)
        self.column = column


class RowParseError(ValidationError):
    """A data cell could not be parsed."""

    def __init__(self, message, row=None, column=None):
        super().__init__(message)
        self.row = row
        self.column = column


class EmptyInputError(ValidationError):
    pass


class ShapeError(ValidationError):
    pass


class StratificationError(ValidationError):
    pass


class ModelLoadError(ValidationError):
    """Serialized model is truncated, corrupted or otherwise unreadable."""


class VersionError(ModelLoadError):
    pass


class RuntimeFailure(RuntimeError):
    pass


class NumericError(RuntimeFailure):
    pass


class TrainingError(RuntimeFailure):
    pass


class StageError(RuntimeFailure):
    pass
