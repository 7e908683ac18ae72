"""Exception types shared across the package."""


class GmfcError(Exception):
    """Base class for all package errors."""


class ConfigError(GmfcError, ValueError):
    """Invalid configuration; ``field`` names the offending key when known."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class DimensionMismatch(GmfcError, ValueError):
    pass


class SizeCapExceeded(GmfcError, ValueError):
    pass


class NonSquareMatrix(GmfcError, ValueError):
    pass


class MarkOutOfBounds(GmfcError, ValueError):
    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class DomainViolation(GmfcError, ValueError):
    pass


class LengthMismatch(GmfcError, ValueError):
    pass


class WeightsNotNormalized(GmfcError, ValueError):
    pass


class GridMismatch(GmfcError, ValueError):
    pass


class SizeMismatch(GmfcError, ValueError):
    pass


class IndexOutOfRange(GmfcError, IndexError):
    pass


class BadSpec(ConfigError):
    pass


class NonFiniteState(GmfcError, FloatingPointError):
    """Raised when a replication produces NaN/Inf states."""

    def __init__(self, message, replication=None, step=None):
        super().__init__(message)
        self.replication = replication
        self.step = step


class NoSnapshot(GmfcError, LookupError):
    pass


class BudgetTooSmall(GmfcError, ValueError):
    pass


class ConcavityNotDeclared(GmfcError, ValueError):
    pass
