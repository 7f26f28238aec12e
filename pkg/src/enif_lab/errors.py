"""Exception types shared across the package."""


class EnifError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(EnifError):
    pass


class NotPositiveDefinite(EnifError):
    """A matrix asserted SPD failed to factor (pivot at or below tolerance)."""


class SolveFailed(EnifError):
    """A linear solve finished but violated its residual contract."""


class OrderTooLarge(EnifError):
    pass


class TooFewStates(EnifError):
    pass


class NonStationary(EnifError):
    pass


class UnstableStep(EnifError):
    pass


class NonFinite(EnifError):
    """Trajectory blow-up detected during integration."""


class GridTooLargeForOracle(EnifError):
    pass


class DegenerateElement(EnifError):
    """Mesh element with non-positive area."""


class UnderdeterminedRow(EnifError):
    """A triangular-map row has at least as many active predictors as samples."""


class ZeroResidual(EnifError):
    """Residual spread collapsed below tolerance; upstream ensemble collapse."""


class Underdetermined(EnifError):
    pass


class WeightsNotNormalised(EnifError):
    pass


class SingularInnovationCovariance(EnifError):
    pass


class ConfigError(EnifError):
    pass
