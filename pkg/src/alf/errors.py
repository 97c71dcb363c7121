"""Exception types shared across the package."""


class AlfError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(AlfError, ValueError):
    pass


class DimensionError(AlfError, ValueError):
    pass


class UnsupportedSizeError(AlfError, ValueError):
    pass


class IllConditionedError(AlfError, ArithmeticError):
    """Raised when a kernel system cannot be factorized even with jitter."""


class EmptyDatasetError(AlfError, ValueError):
    pass


class UnderdeterminedError(AlfError, ValueError):
    pass


class NoReliableNeighborsError(AlfError):
    """No stored task lies close enough to the query to be trusted."""


class ConfigError(AlfError, ValueError):
    pass
