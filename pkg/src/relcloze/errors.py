"""Exception types shared across the pipeline."""


class RelclozeError(Exception):
    """Base class for all errors raised by this package."""


class ConfigurationError(RelclozeError):
    """A ruleset, template, or run configuration is invalid."""


class AnnotationError(RelclozeError):
    """An expert annotation cannot be joined to the segmented corpus."""


class PromptShapeError(RelclozeError):
    """A prompt does not contain exactly one well-formed mask slot."""


class PromptBudgetError(RelclozeError):
    """A prompt scaffold alone exceeds the token budget."""


class BackendError(RelclozeError):
    """An encoder backend rejected an operation."""


class RegistryError(RelclozeError):
    """Model registry lookup or registration failed."""


class ClusteringError(RelclozeError):
    """Clustering input or configuration is unusable."""


class EvaluationError(RelclozeError):
    """Evaluation inputs are inconsistent."""


class StageError(RelclozeError):
    """A pipeline stage cannot run with the current artifacts."""
