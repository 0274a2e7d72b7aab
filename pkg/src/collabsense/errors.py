"""Exception types shared across the package."""


class CollabSenseError(Exception):
    """Base class for every error raised by this package."""


class ConfigurationError(CollabSenseError):
    """User-supplied configuration is invalid (bad ranges, malformed files)."""


class ContractError(CollabSenseError):
    """A caller violated an API contract: shape mismatch, non-finite input."""


class ModelError(CollabSenseError):
    """Model matrices are numerically invalid (indefinite or singular)."""


class EstimationError(CollabSenseError):
    """The requested estimator is undefined for the given mixing matrix."""
