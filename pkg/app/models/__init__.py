"""Numeric domain models package."""

from app.models.field import (
    AnalyticField,
    Bubble,
    Constant,
    DeformedPsi,
    KelvinOf,
    MobiusPullback,
    RadialProfile,
    ScalarMultiple,
)
from app.models.grid import BoundaryPolicy, FieldKind, GridField, GridSpec
from app.models.jet import Jet2
from app.models.matrix import FloatArray, Spectrum, SymMatrix
from app.models.mobius_map import Dilate, Invert, MobiusMap, Translate

__all__ = [
    "AnalyticField",
    "BoundaryPolicy",
    "Bubble",
    "Constant",
    "DeformedPsi",
    "Dilate",
    "FieldKind",
    "FloatArray",
    "GridField",
    "GridSpec",
    "Invert",
    "Jet2",
    "KelvinOf",
    "MobiusMap",
    "MobiusPullback",
    "RadialProfile",
    "ScalarMultiple",
    "Spectrum",
    "SymMatrix",
    "Translate",
]
