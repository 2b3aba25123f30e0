"""Exception hierarchy shared across the package."""


class GpMomentsError(Exception):
    """Base class for all errors raised by this package."""


class DimensionMismatch(GpMomentsError):
    """Vectors or matrices with incompatible shapes were combined."""


class DegenerateBasis(GpMomentsError):
    """Gram-Schmidt input is (numerically) linearly dependent."""


class DomainError(GpMomentsError):
    """A parameter or argument lies outside its admissible domain."""


class EvaluationError(GpMomentsError):
    """A numerical evaluation produced a non-finite or invalid result."""


class ConfigError(GpMomentsError):
    """Invalid or inconsistent configuration."""


class SingularSystem(GpMomentsError):
    """A linear system that should be positive definite is singular.

    Usually fixable by enabling covariance regularization.
    """


class PipelineError(GpMomentsError):
    """Error in a pipeline run, tagged with the stage that failed."""

    def __init__(self, stage, message):
        self.stage = stage
        super().__init__(f"[{stage}] {message}")
