"""Exception taxonomy shared across the package.

The CLI maps these onto stable exit codes, so new error paths should
reuse one of the classes below instead of raising bare ValueErrors.
"""


class PtdiffError(Exception):
    """Base class for all package errors."""


class ParameterError(PtdiffError, ValueError):
    """An argument violates a documented precondition (names the field)."""


class DataError(PtdiffError, ValueError):
    """Input data is malformed (non-finite values, out-of-range pixels, ...)."""


class ConditionError(PtdiffError):
    """A condition handle cannot be resolved by the backend it was given to."""


class BackendError(PtdiffError):
    """A denoiser/codec backend failed (transport error, server fault, ...)."""


class TrajectoryError(BackendError):
    """A trajectory run aborted mid-walk.

    Carries the failing training-grid timestep, the number of completed
    steps, and whatever partial trajectory records were accumulated so a
    caller can inspect how far the run got.
    """

    def __init__(self, message, timestep, completed_steps, partial=()):
        super().__init__(message)
        self.timestep = timestep
        self.completed_steps = completed_steps
        self.partial = tuple(partial)
