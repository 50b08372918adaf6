"""Fast multiple-fold cross-validation for Gaussian process models."""

from .cv import CVResult, compare, fast_cv, naive_cv
from .errors import FastCVError, InputError, NumericalError
from .folds import FoldPartition
from .gp import GPModel, KernelSpec, TrendSpec, fit, predict

__version__ = "0.1.0"

__all__ = [
    "CVResult",
    "FastCVError",
    "FoldPartition",
    "GPModel",
    "InputError",
    "KernelSpec",
    "NumericalError",
    "TrendSpec",
    "compare",
    "fast_cv",
    "fit",
    "naive_cv",
    "predict",
]
