"""Exception types shared across the package."""


class SparfaError(Exception):
    """Base class for errors raised by sparfa_lite."""


class InvalidLabelError(SparfaError, ValueError):
    pass


class DimensionError(SparfaError, ValueError):
    pass


class NumericalError(SparfaError, ArithmeticError):
    """The solver produced a non-finite value or failed to make progress."""


class LineSearchError(NumericalError):
    pass


class DegenerateTagError(SparfaError, ValueError):
    pass


class UnsupportedQuantizerError(SparfaError, ValueError):
    pass


class UndefinedAUCError(SparfaError, ValueError):
    pass


class DataFormatError(SparfaError, ValueError):
    """A data file could not be parsed. ``line`` is 1-based when known."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)
