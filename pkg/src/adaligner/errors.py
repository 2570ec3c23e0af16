"""Exception types raised across the package."""


class AdalignerError(Exception):
    """Base class for package errors."""


class InvalidParameterError(AdalignerError, ValueError):
    pass


class ShapeError(AdalignerError, ValueError):
    pass


class InvalidBatchError(AdalignerError, ValueError):
    pass


class ConfigError(AdalignerError, ValueError):
    pass


class InsufficientDataError(AdalignerError, ValueError):
    pass


class NonFiniteError(AdalignerError, RuntimeError):
    """A loss or gradient left the finite reals during a training step."""


class ParseError(AdalignerError, ValueError):
    """Malformed input file; carries the offending line number when known."""

    def __init__(self, message: str, line: int | None = None, path: str | None = None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}" if where else message)
