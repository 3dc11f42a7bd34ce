"""Exception types shared across the pipeline."""


class EigenplacesError(Exception):
    """Base class for all package errors."""


class ConfigError(EigenplacesError):
    """Invalid or inconsistent configuration."""


class InputError(EigenplacesError):
    """Unreadable or structurally broken input source."""


class EmptyCorpusError(InputError):
    """No valid records survived parsing."""


class InsufficientDataError(EigenplacesError):
    """Too few samples for the requested computation."""


class ContractViolationError(EigenplacesError):
    """A numeric precondition was violated (e.g. non-symmetric covariance)."""


class InfeasibleClusteringError(EigenplacesError):
    """Requested more clusters than there are points."""


class DegenerateClusteringError(EigenplacesError):
    """Clustering collapsed (coincident centroids)."""


class ArtifactError(EigenplacesError):
    """A stage artifact is missing, malformed, or schema-incompatible."""
