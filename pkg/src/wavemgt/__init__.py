"""Numerical lab for a wave equation coupled to an MGT equation with logarithmic source."""
__version__ = "0.1.0"

from .basis import DomainSpec, SpectralField, build_basis
from .dynamics import InitialData, integrate
from .errors import IntegrationBlowup, ValidationError
from .params import ModelParams

__all__ = [
    "DomainSpec", "SpectralField", "build_basis", "InitialData", "integrate",
    "IntegrationBlowup", "ValidationError", "ModelParams", "__version__",
]
