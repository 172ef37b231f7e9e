"""Graph-transformer (TSEN) core operations.

Thin python surface over the C++ library: graph construction primitives,
the learning-rate schedule, CKA representation similarity, the synthetic
dataset generator, and a whole-model wrapper with checkpoint round-trip.
"""

from ._tsen import (
    Model,
    binarize,
    cka,
    gelu,
    generate_synthetic,
    lr_schedule,
    normalized_laplacian,
)

__all__ = [
    "Model",
    "binarize",
    "cka",
    "gelu",
    "generate_synthetic",
    "lr_schedule",
    "normalized_laplacian",
]

__version__ = "0.1.0"
