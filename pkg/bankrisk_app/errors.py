EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_CONVERGENCE = 4


class BankRiskError(Exception):
    """Base class for every failure the CLI reports with a stable exit code."""

    exit_code = EXIT_UNEXPECTED


class ConfigError(BankRiskError):
    """Raised when arguments, schema files or grid files are invalid."""

    exit_code = EXIT_CONFIG


class DataError(BankRiskError):
    """Raised when input data cannot support the requested operation."""

    exit_code = EXIT_DATA


class ConvergenceError(BankRiskError):
    """Raised when an optimizer cannot reach a usable solution."""

    exit_code = EXIT_CONVERGENCE


class MissingFileError(DataError):
    """Raised when an input file does not exist."""

    def __init__(self, path: str) -> None:
        super().__init__(f"File not found: {path}")
        self.path = path


class MissingColumnError(DataError):
    """Raised when a CSV header lacks a required column."""

    def __init__(self, path: str, columns: list[str]) -> None:
        super().__init__(f"Missing required columns in {path}: {columns}")
        self.path = path
        self.columns = columns


class InvalidValueError(DataError):
    """Raised when a feature cell is neither numeric nor a missing marker."""

    def __init__(self, row: int, column: str, value: str) -> None:
        super().__init__(f"Non-numeric value {value!r} at row {row}, column {column!r}")
        self.row = row
        self.column = column
        self.value = value


class InvalidLabelError(DataError):
    """Raised when a label cell is outside the accepted vocabulary."""

    def __init__(self, row: int, column: str, value: str) -> None:
        super().__init__(
            f"Invalid label {value!r} at row {row}, column {column!r}; "
            "expected 0, 1, active or bankrupt"
        )
        self.row = row
        self.column = column
        self.value = value
