"""Exception hierarchy shared by every module.

The CLI maps these onto exit codes, so the split between data/contract
problems and numeric failures matters.
"""


class HeatlensError(Exception):
    """Base class for all errors raised by heatlens."""


class ShapeError(HeatlensError, ValueError):
    """Tensor or layer shapes do not satisfy an operation's contract."""


class DataError(HeatlensError, ValueError):
    """Input data, configuration or files violate a contract."""


class FormatError(DataError):
    """A binary file (TNSR, PGM) could not be parsed.

    ``offset`` is the byte position at which parsing failed.
    """

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class NumericError(HeatlensError, ArithmeticError):
    """Non-finite values, divergence, or a vanishing denominator."""
