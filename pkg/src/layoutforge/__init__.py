"""layoutforge: staged scene-graph-to-image generation on plain numpy.

The pipeline runs in three trained stages: a graph network places bounding
boxes, a convolutional net paints a class layout inside those boxes, and an
autoencoder-style generator fills in pixels. Everything from the tensor
autodiff up is in this package; numpy is the only runtime dependency.
"""

from .errors import (
    CheckpointError,
    ConfigError,
    ContractError,
    DatasetError,
    DegenerateInputError,
    EvaluationError,
    GenerationError,
    GradCheckError,
    LayoutForgeError,
    PlacementError,
    ShapeError,
)

__version__ = "0.1.0"

__all__ = [
    "CheckpointError",
    "ConfigError",
    "ContractError",
    "DatasetError",
    "DegenerateInputError",
    "EvaluationError",
    "GenerationError",
    "GradCheckError",
    "LayoutForgeError",
    "PlacementError",
    "ShapeError",
    "__version__",
]
