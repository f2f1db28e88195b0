"""Exception hierarchy shared across the package."""


class HetfxError(Exception):
    """Base class for all package errors."""


class ConfigError(HetfxError):
    """Invalid or inconsistent configuration / schema input."""


class DataValidationError(HetfxError):
    """Input data violates a contract (roles, types, missingness)."""


class OverlapError(DataValidationError):
    """A treatment arm is empty where both must be populated."""


class RankDeficiencyError(HetfxError):
    """Design matrix is rank deficient after fixed-effect expansion."""


class EstimationError(HetfxError):
    """Estimation failed (too many failed splits, empty group, ...)."""


class ConvergenceWarning(UserWarning):
    """Iterative solver stopped before reaching its tolerance."""
