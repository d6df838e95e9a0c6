"""Exception hierarchy shared by all modules."""
import numpy as np


class FBLSError(Exception):
    """Base class for every error raised by this package."""


class PreconditionError(FBLSError, ValueError):
    """An argument violates the documented precondition of an operation."""


class ShapeMismatchError(PreconditionError):
    """Matrix dimensions do not agree (e.g. wrong feature count at predict)."""


class DataError(FBLSError, ValueError):
    """Input data is malformed: non-finite values, ragged rows, bad labels."""


class DegenerateInputError(FBLSError, ValueError):
    """Input carries no usable signal (e.g. an all-zero feature matrix)."""


class SingularMatrixError(FBLSError, np.linalg.LinAlgError):
    """A linear system is numerically singular.

    ``pivot`` is the zero-based index of the offending pivot.
    """

    def __init__(self, message, pivot):
        super().__init__(message)
        self.pivot = pivot


class StateMismatchError(FBLSError):
    """A model and its pseudoinverse state do not belong together."""
