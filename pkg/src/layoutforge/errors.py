"""Exception taxonomy shared across the package."""


class LayoutForgeError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(LayoutForgeError):
    """Tensor or layout dimensions do not satisfy an operation's contract."""


class ConfigError(LayoutForgeError):
    """A configuration value is invalid or inconsistent."""


class DegenerateInputError(LayoutForgeError):
    """Input is technically well-formed but degenerate for the operation."""


class ContractError(LayoutForgeError):
    """An operation was called outside its documented contract."""


class CheckpointError(LayoutForgeError):
    """Checkpoint file is malformed, truncated, or incompatible."""


class DatasetError(LayoutForgeError):
    """Dataset directory or manifest is missing, corrupt, or inconsistent."""


class PlacementError(LayoutForgeError):
    """A patch rectangle does not fit inside the target canvas."""


class GenerationError(LayoutForgeError):
    """Procedural generation could not satisfy its constraints."""


class EvaluationError(LayoutForgeError):
    """Evaluation was asked to run on unusable data (e.g. an empty split)."""


class GradCheckError(LayoutForgeError):
    """The finite-difference oracle hit a non-finite value."""
