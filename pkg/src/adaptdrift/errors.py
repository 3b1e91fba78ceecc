"""Exception hierarchy.

``DataError`` covers problems with input data or model state; ``ConfigError``
covers invalid settings. The CLI maps them to distinct exit codes.
"""


class AdaptDriftError(Exception):
    pass


class DataError(AdaptDriftError, ValueError):
    pass


class ConfigError(AdaptDriftError, ValueError):
    pass


class MissingColumn(DataError):
    pass


class NonNumericCell(DataError):
    def __init__(self, row: int, column: str, value: str):
        super().__init__(f"non-numeric value {value!r} at row {row}, column {column!r}")
        self.row = row
        self.column = column
        self.value = value


class EmptyFile(DataError):
    pass


class EmptyTrainingSet(DataError):
    pass


class ClassTooSmall(DataError):
    pass


class TooManyDropped(ConfigError):
    pass


class InvalidArchitecture(ConfigError):
    pass


class DimensionMismatch(DataError):
    pass


class EmptyBatch(DataError):
    pass


class ZeroVector(DataError):
    pass


class UnknownLabel(DataError):
    pass


class EmptyClass(DataError):
    pass


class NonPositiveVariance(DataError):
    pass


class NoPrototypes(DataError):
    pass


class UnknownClass(DataError):
    pass


class TooFewClasses(DataError):
    pass


class LengthMismatch(DataError):
    pass


class EmptyInput(DataError):
    pass


class SingleClass(DataError):
    pass


class ProtocolError(ConfigError):
    pass


class FormatError(DataError):
    pass
