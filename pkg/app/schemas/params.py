"""Pydantic schemas for bubble and deformation parameters."""

import math

from pydantic import BaseModel, ConfigDict, Field

from app.models.field import Bubble


class BubbleParams(BaseModel):
    """(a, b, x0) of v(x) = (a / (1 + b²|x - x0|²))^{(n-2)/2}."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    a: float = Field(gt=0)
    b: float = Field(gt=0)
    x0: tuple[float, ...] = Field(min_length=1)

    def to_field(self) -> Bubble:
        return Bubble(self.a, self.b, self.x0)

    @classmethod
    def from_field(cls, bubble: Bubble) -> "BubbleParams":
        return cls(a=bubble.a, b=bubble.b, x0=bubble.x0)


class DeformationParams(BaseModel):
    """Parameters of ψ̃_{μ,τ} = ψ ∓ μ(h - τ)ζ on the ball B_R(0) near x̂ ∈ ∂B.

    Field constraints cover ranges; the cross-field conditions are reported by
    ``violations()`` so that callers can raise their own error.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    alpha: float = Field(ge=1.0)
    mu: float = Field(ge=0.0)
    tau: float = Field(default=0.0, ge=0.0)
    R: float = Field(gt=0)
    xhat: tuple[float, ...] = Field(min_length=1)
    A_radius: float = Field(gt=0)

    @property
    def n(self) -> int:
        return len(self.xhat)

    @property
    def max_a_radius(self) -> float:
        """Largest A radius keeping ζ > 1/2 on A."""
        return math.pi / (3.0 * math.sqrt(self.alpha))

    @property
    def tau0(self) -> float:
        """sup_A h, attained at the point of A closest to the origin."""
        closest = max(math.hypot(*self.xhat) - self.A_radius, 0.0)
        return math.exp(-self.alpha * closest**2) - math.exp(-self.alpha * self.R**2)

    def violations(self) -> list[str]:
        problems = []
        if abs(math.hypot(*self.xhat) - self.R) > 1e-9 * max(1.0, self.R):
            problems.append(f"xhat must lie on the sphere |x| = R = {self.R}")
        if self.A_radius > self.max_a_radius * (1 + 1e-12):
            problems.append(
                f"A_radius {self.A_radius} exceeds pi/(3 sqrt(alpha)) = {self.max_a_radius}"
            )
        if self.tau > self.tau0 * (1 + 1e-12):
            problems.append(f"tau {self.tau} exceeds tau0 = {self.tau0}")
        return problems

    def with_tau(self, tau: float) -> "DeformationParams":
        return self.model_copy(update={"tau": tau})

    def with_mu(self, mu: float) -> "DeformationParams":
        return self.model_copy(update={"mu": mu})
