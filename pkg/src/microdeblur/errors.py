"""Exception types shared across the package."""


class DeblurError(Exception):
    """Base class for all pipeline failures."""


class NumericError(DeblurError):
    """A solver produced non-finite values or collapsed numerically.

    ``where`` identifies the failing step (iteration index, continuation
    stage, ...) so per-tile failures can be reported precisely.
    """

    def __init__(self, message, where=None):
        if where is not None:
            message = f"{message} (at {where})"
        super().__init__(message)
        self.where = where


class SingularSystemError(DeblurError):
    """A linear solve has no unique solution (e.g. zero data, zero damping)."""
