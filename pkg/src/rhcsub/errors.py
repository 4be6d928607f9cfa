"""Exception hierarchy shared by every module."""


class RhcError(Exception):
    """Base class for all errors raised by rhcsub."""


class DimensionMismatch(RhcError, ValueError):
    pass


class InvalidRange(RhcError, ValueError):
    pass


class NonConvergence(RhcError, ArithmeticError):
    pass


class NumericalError(RhcError, ArithmeticError):
    pass


class Unstable(RhcError, ArithmeticError):
    """Raised when a gain does not stabilize the true system."""


class Diverged(RhcError, ArithmeticError):
    """Raised when a simulated trajectory leaves the overflow guard."""


class RankDeficient(RhcError, ArithmeticError):
    pass


class SingularQ(RhcError, ValueError):
    pass


class ModelErrorTooLarge(RhcError, ValueError):
    pass


class RateProductNotContractive(RhcError, ValueError):
    pass


class InvalidRate(RhcError, ValueError):
    pass


class ConfigError(RhcError, ValueError):
    pass
