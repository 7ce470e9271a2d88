"""Exception hierarchy shared by all modules."""


class RFDEError(Exception):
    """Base class for every error raised by this package."""


class InvalidMesh(RFDEError, ValueError):
    pass


class DomainError(RFDEError, ValueError):
    """A function was evaluated outside the interval it is defined on."""


class PeriodBelowDelay(RFDEError, ValueError):
    """The period fell below the maximum delay, so states would leave [-1, 0]."""


class SingularJacobian(RFDEError):
    pass


class NoConvergence(RFDEError):
    pass


class NoCycleDetected(RFDEError):
    pass


class NumericalError(RFDEError):
    pass


class SchemaError(RFDEError, ValueError):
    pass


class UnknownProblem(RFDEError, KeyError):
    pass
