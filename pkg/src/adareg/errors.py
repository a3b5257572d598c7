"""Exception hierarchy shared by every module."""


class AdaregError(Exception):
    pass


class DimensionMismatch(AdaregError, ValueError):
    pass


class NotSymmetric(AdaregError, ValueError):
    pass


class NotPositiveDefinite(AdaregError, ValueError):
    pass


class NonFiniteState(AdaregError, ArithmeticError):
    """Raised when a state or a right-hand side evaluation stops being finite.

    ``t`` is the time of the first failure; ``partial`` optionally carries the
    trajectory logged up to that point.
    """

    def __init__(self, message, t=None, partial=None):
        super().__init__(message)
        self.t = t
        self.partial = partial


class MaxStepsExceeded(AdaregError, RuntimeError):
    pass


class EmptyTrajectory(AdaregError, ValueError):
    pass


class WindowTooLong(AdaregError, ValueError):
    pass


class DegenerateSeries(AdaregError, ValueError):
    pass


class UnknownSignal(AdaregError, KeyError):
    pass


class UnknownScenario(AdaregError, KeyError):
    pass


class SchemaError(AdaregError, ValueError):
    """Config validation failure. ``errors`` is a list of (path, message)."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(f"{p or '<root>'}: {m}" for p, m in self.errors))
