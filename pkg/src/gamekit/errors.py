"""Exception types raised across the package."""


class GamekitError(Exception):
    """Base class for all package errors."""


class InvalidInput(GamekitError, ValueError):
    """Non-finite entries, wrong shapes or out-of-range parameters."""


class SingularMatrix(GamekitError, ArithmeticError):
    """A square solve was attempted on a matrix that is singular to tolerance."""

    def __init__(self, message, rcond):
        super().__init__(f"{message} (rcond={rcond:.3e})")
        self.rcond = rcond


class NotObservable(GamekitError):
    """The (A, C) pair has no finite lag."""


class InconsistentInitialData(GamekitError):
    """An initial input/output window is not a trajectory of the system."""

    def __init__(self, message, residual):
        super().__init__(f"{message} (relative residual={residual:.3e})")
        self.residual = residual


class RankShortfall(GamekitError):
    """Offline data do not span the restricted behavior."""


class PreconditionError(GamekitError):
    """An operation was called without its certified precondition."""


class SingularStageMatrix(GamekitError):
    """The stacked best-response matrix at some stage is singular to tolerance.

    ``partial`` holds the stage results already computed for stages after
    ``t`` so callers can inspect how far the backward pass got.
    """

    def __init__(self, t, rcond, partial=()):
        super().__init__(f"stage matrix singular at t={t} (rcond={rcond:.3e})")
        self.t = t
        self.rcond = rcond
        self.partial = tuple(partial)


class NoConvergence(GamekitError):
    def __init__(self, T_max, last_diff):
        super().__init__(
            f"first-stage gains did not settle within T_max={T_max} "
            f"(last difference {last_diff:.3e})")
        self.T_max = T_max
        self.last_diff = last_diff


class Diverged(GamekitError):
    def __init__(self, t, norm):
        super().__init__(f"trajectory diverged at t={t} (norm {norm:.3e})")
        self.t = t
        self.norm = norm
