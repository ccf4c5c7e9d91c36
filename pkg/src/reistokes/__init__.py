"""Two-scale (reiterated) homogenization of periodic Stokes systems."""
from .errors import (ConfigError, DegenerateData, EllipticityViolation, EpsilonTooSmall,
                     IncompatibleData, MeanNotZero, NoConvergence, NonZeroMean,
                     ResolutionInsufficient, RTooSmall, StageError)
from .fields import (CoefficientSpec, CoefficientTerm, PeriodicGrid, TwoScaleCoefficient,
                     check_ellipticity, identity_tensor, sample_coefficient)
from .kernels import BACKEND

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "CoefficientSpec", "CoefficientTerm", "ConfigError", "DegenerateData",
    "EllipticityViolation", "EpsilonTooSmall", "IncompatibleData", "MeanNotZero",
    "NoConvergence", "NonZeroMean", "PeriodicGrid", "ResolutionInsufficient", "RTooSmall",
    "StageError", "TwoScaleCoefficient", "check_ellipticity", "identity_tensor",
    "sample_coefficient",
]
