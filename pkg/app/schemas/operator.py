"""Pydantic schemas for operators (f, Γ)."""

import enum
from typing import Self

from pydantic import BaseModel, ConfigDict, Field, model_validator


class ConeKind(enum.StrEnum):
    gamma_k = "gamma_k"
    half_space_gamma1 = "half_space_gamma1"
    custom = "custom"


class FFamily(enum.StrEnum):
    sigma_k_root = "sigma_k_root"
    sigma_k_raw = "sigma_k_raw"
    custom = "custom"


class ConeSpec(BaseModel):
    """Which cone Γ: a Gårding cone Γ_k, the half space Γ_1, or a registered predicate."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: ConeKind = ConeKind.gamma_k
    n: int = Field(ge=1)
    k: int | None = None
    name: str | None = None

    @model_validator(mode="after")
    def check_kind(self) -> Self:
        if self.kind is ConeKind.gamma_k and (self.k is None or not 1 <= self.k <= self.n):
            raise ValueError(f"gamma_k cone needs 1 <= k <= n, got k={self.k}, n={self.n}")
        if self.kind is ConeKind.custom and not self.name:
            raise ValueError("custom cone needs a registered name")
        return self

    @property
    def order(self) -> int:
        """Number of σ_j conditions in the membership test."""
        if self.kind is ConeKind.gamma_k:
            assert self.k is not None
            return self.k
        return 1


class OperatorSpec(BaseModel):
    """The pair (f, Γ) together with the right-hand side ``level``."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    f_family: FFamily = FFamily.sigma_k_root
    n: int = Field(ge=1)
    k: int = 1
    cone: ConeSpec
    boundary_tol: float = Field(default=1e-10, gt=0)
    level: float = Field(default=1.0, gt=0)
    custom_name: str | None = None

    @model_validator(mode="after")
    def check_consistency(self) -> Self:
        if self.cone.n != self.n:
            raise ValueError(f"cone dimension {self.cone.n} != operator dimension {self.n}")
        if self.f_family is FFamily.custom:
            if not self.custom_name:
                raise ValueError("custom operator needs a registered name")
        elif not 1 <= self.k <= self.n:
            raise ValueError(f"sigma_k family needs 1 <= k <= n, got k={self.k}, n={self.n}")
        return self

    @classmethod
    def sigma_k(
        cls, n: int, k: int, *, root: bool = True, level: float = 1.0, boundary_tol: float = 1e-10
    ) -> "OperatorSpec":
        return cls(
            f_family=FFamily.sigma_k_root if root else FFamily.sigma_k_raw,
            n=n,
            k=k,
            cone=ConeSpec(kind=ConeKind.gamma_k, n=n, k=k),
            level=level,
            boundary_tol=boundary_tol,
        )

    @classmethod
    def custom(cls, n: int, name: str, *, level: float = 1.0) -> "OperatorSpec":
        return cls(
            f_family=FFamily.custom,
            n=n,
            cone=ConeSpec(kind=ConeKind.custom, n=n, name=name),
            custom_name=name,
            level=level,
        )
