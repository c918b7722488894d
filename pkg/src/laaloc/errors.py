"""Exception hierarchy shared across the package.

The CLI maps these onto process exit codes: bad input -> 2, pipeline
failure -> 3, configuration mismatch -> 4.
"""


class LaalocError(Exception):
    """Base class for all package errors."""


class BadInputError(LaalocError):
    """Malformed files, invalid parameters, or violated preconditions."""

    exit_code = 2


class PipelineError(LaalocError):
    """A processing stage failed on otherwise well-formed input."""

    exit_code = 3


class ConfigMismatchError(LaalocError):
    """Stored configuration is incompatible with the requested one."""

    exit_code = 4


class TrackingStalledError(PipelineError):
    """Centerline tracking ran out of candidates before the minimum length."""


class NoLocalMinimumError(PipelineError):
    """The rule-based localizer found no local minimum before the main rise."""


class DegenerateMaskError(PipelineError):
    """A mask or distance map is degenerate (all foreground, all zero, ...)."""


class SeedOutsideForegroundError(PipelineError):
    """The user seed does not lie inside the segmented foreground."""


class DegenerateTangentError(PipelineError):
    """Centerline tangent has zero length; no plane normal can be derived."""


class CenterInBackgroundError(PipelineError):
    """A cross-section plane center fell outside the foreground mask."""


class DivergenceError(PipelineError):
    """Value estimates grew beyond any achievable discounted return."""


class NonFiniteGradientError(PipelineError):
    """An optimizer step was rejected because gradients were not finite."""
