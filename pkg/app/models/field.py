"""Analytic positive fields u on (subsets of) R^n.

Fields are immutable descriptions; their jets are computed by
``app.services.fields``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.interpolate import CubicSpline

from app.models.mobius_map import MobiusMap


@dataclass(frozen=True)
class Constant:
    c: float
    n: int

    def __post_init__(self) -> None:
        if self.c <= 0:
            raise ValueError("constant field must be positive")


@dataclass(frozen=True)
class Bubble:
    """v(x) = (a / (1 + b²|x - x0|²))^{(n-2)/2}."""

    a: float
    b: float
    x0: tuple[float, ...]

    def __post_init__(self) -> None:
        if self.a <= 0 or self.b <= 0:
            raise ValueError("bubble parameters a and b must be positive")

    @property
    def n(self) -> int:
        return len(self.x0)

    @property
    def decay_constant(self) -> float:
        """lim |y|^{n-2} v(y) = a^{(n-2)/2} / b^{n-2}."""
        n = self.n
        return float(self.a ** ((n - 2) / 2) / self.b ** (n - 2))

    @property
    def eigenvalue(self) -> float:
        """Every eigenvalue of the bubble's conformal Hessian: 2b²/a²."""
        return 2.0 * self.b**2 / self.a**2


@dataclass(frozen=True)
class RadialProfile:
    """u(x) = g(|x - center|) for a tabulated profile g on [0, radii[-1]].

    g is a cubic spline through the table with g'(0) = 0 imposed.
    """

    radii: tuple[float, ...]
    values: tuple[float, ...]
    center: tuple[float, ...]

    def __post_init__(self) -> None:
        r = np.asarray(self.radii)
        if r.size < 4 or r[0] != 0.0 or np.any(np.diff(r) <= 0):
            raise ValueError("radial table needs >= 4 increasing radii starting at 0")
        if len(self.values) != r.size or min(self.values) <= 0:
            raise ValueError("radial values must be positive and match the radii")

    @property
    def n(self) -> int:
        return len(self.center)

    @property
    def max_radius(self) -> float:
        return self.radii[-1]

    @cached_property
    def spline(self) -> CubicSpline:
        return CubicSpline(
            np.asarray(self.radii), np.asarray(self.values), bc_type=((1, 0.0), "not-a-knot")
        )


@dataclass(frozen=True)
class KelvinOf:
    """w_{x,λ}(y) = (λ/|y - x|)^{n-2} w(x + λ²(y - x)/|y - x|²); y = x is excluded."""

    inner: AnalyticField
    center: tuple[float, ...]
    lam: float

    def __post_init__(self) -> None:
        if self.lam <= 0:
            raise ValueError("Kelvin radius must be positive")

    @property
    def n(self) -> int:
        return len(self.center)


@dataclass(frozen=True)
class MobiusPullback:
    """w_φ = |J_φ|^{(n-2)/(2n)} w∘φ."""

    inner: AnalyticField
    phi: MobiusMap

    @property
    def n(self) -> int:
        return self.phi.n


@dataclass(frozen=True)
class ScalarMultiple:
    c: float
    inner: AnalyticField

    def __post_init__(self) -> None:
        if self.c <= 0:
            raise ValueError("scalar multiple must be positive")

    @property
    def n(self) -> int:
        return self.inner.n


@dataclass(frozen=True)
class DeformedPsi:
    """ψ-form field ψ_base + sign·μ(h - τ)ζ with

    h = e^{-α|x|²} - e^{-αR²} and ζ = cos(√α (x₁ - x̂₁)).

    ``sign = -1`` is the strict super-solution deformation of a solution ψ₂,
    ``sign = +1`` the strict sub-solution deformation of ψ₁.
    """

    base: AnalyticField
    alpha: float
    mu: float
    tau: float
    radius: float
    xhat: tuple[float, ...]
    sign: int = -1

    @property
    def n(self) -> int:
        return self.base.n


AnalyticField = (
    Constant | Bubble | RadialProfile | KelvinOf | MobiusPullback | ScalarMultiple | DeformedPsi
)


def family_name(f: AnalyticField) -> str:
    return type(f).__name__
