"""Exception hierarchy shared by the solvers and the command line."""


class AvParkError(Exception):
    """Base class for every error raised by this package."""


class InvalidConfigError(AvParkError, ValueError):
    pass


class GenerationError(AvParkError):
    """The random generator kept drawing AVs with no feasible facility."""


class InstanceInfeasibleError(AvParkError):
    pass


class AvInfeasibleError(InstanceInfeasibleError):
    """Raised when an AV has no facility it can physically use."""

    def __init__(self, av: int):
        super().__init__(f"AV {av} has no feasible parking facility")
        self.av = av


class OracleLimitError(AvParkError):
    """A search or enumeration budget was exhausted before an answer was proven."""


class RecoveryFailedError(AvParkError):
    def __init__(self, message: str, trace, where=None, violations=()):
        super().__init__(message)
        self.trace = trace
        self.where = where
        self.violations = list(violations)
