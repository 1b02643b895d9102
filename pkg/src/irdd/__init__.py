"""Isotonic regression at support boundaries and isotonic RDD estimators."""

__version__ = "0.1.0"

from .baselines import knn_boundary, local_linear_boundary, sharp_baseline_estimate
from .bootstrap import BootstrapReport, boundary_wild_ci, naive_wild_ci, sharp_wild_ci
from .errors import (
    ConfigError,
    DegenerateWindowError,
    EstimationError,
    InsufficientDataError,
    InvalidInputError,
    IrddError,
    RangeError,
    WeakDiscontinuityError,
)
from .isotonic import Sample, StepFit, eval_step, pava_fit
from .rdd import RddConfig, RddEstimate, fuzzy_estimate, sharp_estimate, trimmed_fit

__all__ = [
    "__version__",
    "Sample",
    "StepFit",
    "pava_fit",
    "eval_step",
    "RddConfig",
    "RddEstimate",
    "sharp_estimate",
    "fuzzy_estimate",
    "trimmed_fit",
    "BootstrapReport",
    "sharp_wild_ci",
    "boundary_wild_ci",
    "naive_wild_ci",
    "knn_boundary",
    "local_linear_boundary",
    "sharp_baseline_estimate",
    "IrddError",
    "InvalidInputError",
    "ConfigError",
    "RangeError",
    "EstimationError",
    "InsufficientDataError",
    "WeakDiscontinuityError",
    "DegenerateWindowError",
]
