"""Exception hierarchy.

Each family carries the CLI exit code it maps to: 2 for configuration
problems, 3 for bad input data, 4 for numeric or estimation failures.
"""


class CrashRiskError(Exception):
    exit_code = 1


class ConfigError(CrashRiskError):
    exit_code = 2


class DataError(CrashRiskError):
    exit_code = 3


class SchemaError(DataError):
    """A required column is missing from an input file."""


class DuplicateKeyError(DataError):
    def __init__(self, key, row=None):
        self.key = key
        self.row = row
        where = f" (row {row})" if row is not None else ""
        super().__init__(f"duplicate key {key!r}{where}")


class InsufficientDataError(DataError):
    pass


class NumericError(CrashRiskError):
    exit_code = 4


class SingularDesignError(NumericError):
    def __init__(self, message, columns=()):
        self.columns = tuple(columns)
        super().__init__(message)


class SingularCovarianceError(NumericError):
    pass


class DegenerateDataError(NumericError):
    pass


class UndefinedMeasureError(NumericError):
    pass


class SeparationError(NumericError):
    pass


class DimensionError(NumericError):
    pass


class DegenerateColumnError(DataError):
    def __init__(self, column):
        self.column = column
        super().__init__(f"column {column} has no variation")
