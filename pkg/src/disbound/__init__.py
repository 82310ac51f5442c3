"""Disintegrated PAC-Bayes bounds: computation, optimization and validation."""

from ._kernels import BACKEND
from .binary_kl import (
    DegeneratePointError,
    InfiniteDivergenceError,
    KlInverseResult,
    kl,
    kl_inverse,
    kl_inverse_grad,
    kl_inverse_many,
    pinsker_gap,
)
from .bounds import BoundContext, BoundReport, bound_baseline, bound_ours, bound_stochastic
from .divergences import DiscreteMeasure, IsotropicGaussian

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "BoundContext",
    "BoundReport",
    "DegeneratePointError",
    "DiscreteMeasure",
    "InfiniteDivergenceError",
    "IsotropicGaussian",
    "KlInverseResult",
    "bound_baseline",
    "bound_ours",
    "bound_stochastic",
    "kl",
    "kl_inverse",
    "kl_inverse_grad",
    "kl_inverse_many",
    "pinsker_gap",
]
