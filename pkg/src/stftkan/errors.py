"""Exception hierarchy shared by every module.

Each class carries the process exit code the CLI maps it to.
"""


class StftKanError(Exception):
    exit_code = 1


class UsageError(StftKanError):
    exit_code = 1


class ConfigError(StftKanError):
    exit_code = 1


class DimensionError(StftKanError, ValueError):
    exit_code = 1


class DataError(StftKanError):
    exit_code = 2


class ParseError(DataError):
    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = []
        if path is not None:
            where.append(str(path))
        if line is not None:
            where.append(f"line {line}")
        prefix = ":".join(where)
        super().__init__(f"{prefix}: {message}" if prefix else message)


class FormatError(DataError):
    pass


class NumericalError(StftKanError, FloatingPointError):
    exit_code = 3


class CheckpointError(StftKanError):
    exit_code = 4


class TruncatedFileError(DataError, OSError):
    pass
