"""Closed-form method-of-images solutions for correlated 2D drift-diffusion
absorbed on the negative half-axes, with a Monte Carlo cross-check."""

__version__ = "0.1.0"

from .correlation import (  # noqa: E402
    INFINITY,
    AngleParams,
    ProcessSpec,
    angles,
    nearest_solvable_k,
    rho_from_k,
    solvable_k,
    validate_spec,
)
from .errors import ConsistencyError, DomainError, UnsolvableCorrelationError, WeightOverflowError  # noqa: E402
from .images import (  # noqa: E402
    ImageSet,
    build_image_set,
    build_image_set_mapping,
    build_image_set_rotation,
    image_weights,
    reflection_maps,
    verify_image_set,
    whitening_matrix,
)
from .solution import Rho1Evaluator, SolutionEvaluator, rho1_line_pdf  # noqa: E402

__all__ = [
    "INFINITY",
    "AngleParams",
    "ConsistencyError",
    "DomainError",
    "ImageSet",
    "ProcessSpec",
    "Rho1Evaluator",
    "SolutionEvaluator",
    "UnsolvableCorrelationError",
    "WeightOverflowError",
    "angles",
    "build_image_set",
    "build_image_set_mapping",
    "build_image_set_rotation",
    "image_weights",
    "nearest_solvable_k",
    "reflection_maps",
    "rho1_line_pdf",
    "rho_from_k",
    "solvable_k",
    "validate_spec",
    "verify_image_set",
    "whitening_matrix",
]
