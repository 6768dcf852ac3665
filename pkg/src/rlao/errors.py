"""Exception types shared across the package."""


class RlaoError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(RlaoError, ValueError):
    pass


class ContractViolationError(RlaoError, ValueError):
    """An operation was called with inputs that break its stated precondition."""


class ResourceLimitError(RlaoError, RuntimeError):
    pass


class StateError(RlaoError, RuntimeError):
    pass


class DomainError(RlaoError, KeyError):
    """A query fell outside the domain of a partially defined function."""


class ModelViolationError(RlaoError, RuntimeError):
    """Observed data contradicts a modelling assumption (e.g. deterministic rewards)."""


class ConfigError(RlaoError, ValueError):
    pass


class PreconditionError(RlaoError, ValueError):
    pass
