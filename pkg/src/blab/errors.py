"""Exception hierarchy shared by every module of the package."""


class BilliardError(Exception):
    """Base class for all errors raised by blab."""


class InvalidDescriptor(BilliardError, ValueError):
    pass


class NonPositiveRadius(InvalidDescriptor):
    pass


class SelfIntersecting(InvalidDescriptor):
    pass


class NonSmooth(InvalidDescriptor):
    pass


class NumericalFailure(BilliardError):
    """Failures of the numerical machinery itself (CLI exit code 2)."""


class GrazingIntersection(NumericalFailure):
    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class NoIntersection(NumericalFailure):
    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class StepUnderflow(NumericalFailure):
    pass


class DegenerateTriangle(NumericalFailure):
    pass


class DataError(BilliardError, ValueError):
    """Bad input data handed to an estimator (CLI exit code 1)."""


class TooFewPoints(DataError):
    pass


class OutOfRange(DataError):
    pass


class NotAccumulationPoint(DataError):
    pass


class NotAsymptotic(DataError):
    pass
