"""Hyperelliptic spectral data, periods and isoperiodic flows."""

from .poly import Polynomial, roots, resultant, discriminant, sqrt_series_polypart, mobius_constant
from .curve import CaseFlags, Involution, SpectralData, MoebiusTransform, validate

__version__ = "0.1.0"

__all__ = [
    "Polynomial",
    "roots",
    "resultant",
    "discriminant",
    "sqrt_series_polypart",
    "mobius_constant",
    "CaseFlags",
    "Involution",
    "SpectralData",
    "MoebiusTransform",
    "validate",
]
