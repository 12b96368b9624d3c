"""Exception types shared across the package."""


class GpclError(Exception):
    """Base class for all package-specific errors."""


class DomainError(GpclError, ValueError):
    """A parameter or argument lies outside its mathematical domain."""


class DataError(GpclError, ValueError):
    """An input series is unusable for the requested operation."""


class EmbeddingError(GpclError, RuntimeError):
    """Circulant embedding produced materially negative eigenvalues."""


class CovarianceError(GpclError, RuntimeError):
    """A tuple covariance matrix is numerically singular."""


class EvaluationError(GpclError, RuntimeError):
    """An objective evaluation returned a non-finite value."""


class DegenerateSeriesError(GpclError, ValueError):
    """A variation statistic vanished, so moment estimation is impossible."""


class NonIdentifiedError(GpclError, RuntimeError):
    """A moment-matching search terminated on the boundary of its box."""


class RegimeError(GpclError, RuntimeError):
    """The requested asymptotic quantity is undefined in this rate regime."""


class TruncationError(GpclError, RuntimeError):
    """A truncated infinite sum has an estimated tail above tolerance."""


class SampleSizeError(GpclError, ValueError):
    """The exact likelihood was refused because the series is too long."""


class IngestError(GpclError, ValueError):
    """Tick data could not be ingested (too many malformed rows)."""


class ConfigError(GpclError, ValueError):
    """A run configuration is malformed or inconsistent."""


class BudgetError(GpclError, RuntimeError):
    """A requested computation exceeds the configured budget."""


class StudyError(GpclError, RuntimeError):
    """A simulation study had too many failed replications."""
