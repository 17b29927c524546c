"""Exception types shared across the package."""


class SapError(Exception):
    """Base class for all errors raised by sapadmm."""


class InvalidInput(SapError, ValueError):
    pass


class EmptyDomain(SapError, ValueError):
    def __init__(self, message="function has an empty domain", index=None):
        if index is not None:
            message = f"{message} (component {index})"
        super().__init__(message)
        self.index = index


class Unbounded(SapError, ValueError):
    def __init__(self, message="function is unbounded below", index=None):
        if index is not None:
            message = f"{message} (component {index})"
        super().__init__(message)
        self.index = index


class NotConvex(SapError, ValueError):
    pass


class ZeroScale(SapError, ValueError):
    pass


class DimensionMismatch(SapError, ValueError):
    pass


class SingularKkt(SapError, ArithmeticError):
    pass


class NoFeasibleCandidate(SapError, RuntimeError):
    """No iterate reached the residual tolerance; ``result`` holds the run telemetry."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class TooManyDegreesOfFreedom(SapError, ValueError):
    pass


class TooManyConstraintRows(SapError, ValueError):
    pass


class BudgetExceeded(SapError, ValueError):
    pass


class LotMismatch(SapError, ValueError):
    pass


class UnboundedInteger(SapError, ValueError):
    pass
