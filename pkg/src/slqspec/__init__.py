"""Matrix-free spectral density estimation by stochastic Lanczos quadrature."""

from .chebyshev import ChebyshevDensity, estimate_density_cheb
from .exceptions import (ConvergenceError, DegenerateSpectrumError, InvalidInputError,
                         NumericFailureError, ResourceLimitError, SlqSpecError)
from .nn import MlpConfig, TwoLayerMLP
from .operator import SymmetricOperator, covariance_operator, dense_operator
from .slq import (SLQDensity, SpectralDensityEstimate, concentration_bound, estimate_density,
                  exact_smoothed_density, golub_welsch, l1_distance, lanczos)

__version__ = "0.1.0"

__all__ = [
    "ChebyshevDensity", "ConvergenceError", "DegenerateSpectrumError", "InvalidInputError",
    "MlpConfig", "NumericFailureError", "ResourceLimitError", "SLQDensity", "SlqSpecError",
    "SpectralDensityEstimate", "SymmetricOperator", "TwoLayerMLP", "concentration_bound",
    "covariance_operator", "dense_operator", "estimate_density", "estimate_density_cheb",
    "exact_smoothed_density", "golub_welsch", "l1_distance", "lanczos",
]
