"""Exception types shared across the package."""


class FloFormatError(ValueError):
    """A .flo file violates the expected binary layout."""


class SceneValidationError(ValueError):
    """A scene description is invalid; the message lists every violation."""


class IntegrationError(RuntimeError):
    """Particle advection produced a non-finite position."""


class NumericalError(RuntimeError):
    """A linear solve failed its definiteness or residual check."""


class DegenerateGraphError(RuntimeError):
    """The affinity graph has no usable edges."""


class PipelineStageError(RuntimeError):
    """A pipeline stage failed; carries the stage name and the original cause."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"{stage}: {cause}")
        self.stage = stage
        self.cause = cause
