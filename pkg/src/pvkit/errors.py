class PvkitError(Exception):
    """Base class for all toolkit errors."""


class ModelLoadError(PvkitError):
    """Weights file missing or incompatible with the architecture descriptor."""


class ConfigurationError(PvkitError):
    """Invalid descriptor / decoder / service configuration."""


class ShapeError(PvkitError):
    """Array shape does not match the declared contract."""


class IngestionError(PvkitError):
    """Dataset manifest or image file could not be loaded."""


class ProvenanceError(PvkitError):
    """Digest mismatch between an artifact and the component it claims to come from."""


class StageError(PvkitError):
    """Pipeline failure, labeled with the stage that raised it."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
