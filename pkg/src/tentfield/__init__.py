"""Numerical toolkit for trilinear forms with multipliers singular along a curve."""
from .geometry import ConstantPack, SingularCurve, Tent, derive_constants, load_curve
from .bumps import AlphaGrid, BumpProfile, Field, GridMeasure, embed

__version__ = "0.1.0"

__all__ = [
    "AlphaGrid", "BumpProfile", "ConstantPack", "Field", "GridMeasure", "SingularCurve", "Tent",
    "derive_constants", "embed", "load_curve",
]
