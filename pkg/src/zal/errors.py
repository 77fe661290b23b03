"""Exception hierarchy shared by every module."""


class ZalError(Exception):
    """Base class; the CLI maps subclasses to exit codes."""

    exit_code = 1


class PoleAtOne(ZalError, ZeroDivisionError):
    exit_code = 3


class PrecisionUnreachable(ZalError, ArithmeticError):
    exit_code = 4


class OnZero(ZalError):
    """The evaluation point sits on (numerically) a zero of zeta."""

    exit_code = 4

    def __init__(self, msg, t=None):
        super().__init__(msg)
        self.t = t


class QuadratureFailure(ZalError, ArithmeticError):
    exit_code = 4


class DomainError(ZalError, ValueError):
    exit_code = 2


class TooSmall(ZalError, ValueError):
    """Resonator parameters for which the construction degenerates."""

    exit_code = 3


class TooLarge(ZalError, ValueError):
    exit_code = 3


class NotInSupport(ZalError, ValueError):
    exit_code = 2
