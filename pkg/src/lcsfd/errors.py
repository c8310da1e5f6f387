"""Exception hierarchy. CLI exit codes are attached to the base classes."""


class LcsfdError(Exception):
    exit_code = 1


class ConfigurationError(LcsfdError, ValueError):
    exit_code = 2


class DomainError(LcsfdError, ValueError):
    exit_code = 2


class PreconditionError(LcsfdError, ValueError):
    exit_code = 2


class NumericalError(LcsfdError, ArithmeticError):
    exit_code = 3


class DivergenceError(NumericalError):
    def __init__(self, message, step=None, theta=None):
        super().__init__(message)
        self.step = step
        self.theta = theta


class ConditioningError(NumericalError):
    pass


class EvaluationError(NumericalError):
    def __init__(self, message, coordinate=None):
        super().__init__(message)
        self.coordinate = coordinate


class ContractError(LcsfdError, RuntimeError):
    """Stale cached object used against data it was not built from."""

    exit_code = 3
