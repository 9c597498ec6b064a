"""Pydantic schemas for experiment configs: field specs, operator, tolerances, command blocks."""

import enum
from typing import Annotated, Literal, Self

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.models.grid import BoundaryPolicy, FieldKind
from app.schemas.operator import OperatorSpec
from app.schemas.reports import DeformationCase
from app.services.symfun import get_custom


class Command(enum.StrEnum):
    check_solution = "check-solution"
    mobius_invariance = "mobius-invariance"
    sup_convolve = "sup-convolve"
    deformation = "deformation"
    hopf = "hopf"
    moving_sphere = "moving-sphere"
    liouville = "liouville"


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


# ---------------------------------------------------------------------------
# Tolerances
# ---------------------------------------------------------------------------


class Tolerances(_Strict):
    """The resolved numeric knobs of one run; embedded in every summary."""

    jacobi_tol: float = Field(gt=0)
    boundary_tol: float = Field(gt=0)
    verdict_tol_exact: float = Field(gt=0)
    verdict_grid_factor: float = Field(gt=0)
    pole_guard: float = Field(gt=0)
    contact_rel_tol: float = Field(gt=0)
    stencil_tol: float = Field(ge=0)
    c11_hessian_bound: float = Field(gt=0)
    c11_max_kink_fraction: float = Field(ge=0, le=1)
    contact_tol: float = Field(gt=0)
    alpha_doublings: int = Field(ge=0)
    mu_halvings: int = Field(ge=0)
    mu_fraction: float = Field(gt=0)
    bisection_steps: int = Field(ge=1)
    deformation_samples: int = Field(ge=1)
    deformation_radius: float = Field(gt=0)
    hopf_tol: float = Field(gt=0)
    hopf_min_s: float = Field(gt=0)
    sphere_directions: int = Field(ge=6)
    sphere_radii: int = Field(ge=2)
    sphere_probe_count: int = Field(ge=8)
    sphere_compare_tol: float = Field(gt=0)
    radius_rel_tol: float = Field(gt=0)
    identity_rel_tol: float = Field(gt=0)
    fit_tol: float = Field(gt=0)
    certification_samples: int = Field(ge=1)


# ---------------------------------------------------------------------------
# Field specs
# ---------------------------------------------------------------------------


class TranslateSpec(_Strict):
    op: Literal["translate"]
    vector: list[float]


class DilateSpec(_Strict):
    op: Literal["dilate"]
    r: float = Field(gt=0)


class InvertSpec(_Strict):
    op: Literal["invert"]
    center: list[float]


MobiusOpSpec = Annotated[TranslateSpec | DilateSpec | InvertSpec, Field(discriminator="op")]


class ConstantSpec(_Strict):
    family: Literal["constant"]
    c: float = Field(gt=0)


class BubbleSpec(_Strict):
    family: Literal["bubble"]
    a: float = Field(gt=0)
    b: float = Field(gt=0)
    x0: list[float]


class TunedBubbleSpec(_Strict):
    """Bubble solving the configured operator: a is derived from b and the diagonal level."""

    family: Literal["tuned_bubble"]
    b: float = Field(gt=0)
    x0: list[float]
    scale: float = Field(default=1.0, gt=0)


class ScaledSpec(_Strict):
    family: Literal["scaled"]
    c: float = Field(gt=0)
    inner: "FieldSpec"


class KelvinSpec(_Strict):
    family: Literal["kelvin"]
    inner: "FieldSpec"
    center: list[float]
    lam: float = Field(gt=0)


class PullbackSpec(_Strict):
    family: Literal["pullback"]
    inner: "FieldSpec"
    ops: list[MobiusOpSpec] = Field(min_length=1)


class RadialSpec(_Strict):
    family: Literal["radial"]
    radii: list[float] = Field(min_length=4)
    values: list[float] = Field(min_length=4)
    center: list[float]

    @model_validator(mode="after")
    def check_table(self) -> Self:
        if len(self.radii) != len(self.values):
            raise ValueError("radii and values must have the same length")
        return self


class GridFileSpec(_Strict):
    family: Literal["grid_file"]
    path: str
    boundary_policy: BoundaryPolicy = BoundaryPolicy.reject
    kind: FieldKind | None = None


FieldSpec = Annotated[
    ConstantSpec
    | BubbleSpec
    | TunedBubbleSpec
    | ScaledSpec
    | KelvinSpec
    | PullbackSpec
    | RadialSpec
    | GridFileSpec,
    Field(discriminator="family"),
]

ScaledSpec.model_rebuild()
KelvinSpec.model_rebuild()
PullbackSpec.model_rebuild()


# ---------------------------------------------------------------------------
# Operator and command blocks
# ---------------------------------------------------------------------------


class OperatorConfig(_Strict):
    family: Literal["sigma_k", "sigma_k_raw", "custom"] = "sigma_k"
    n: int = Field(ge=3)
    k: int = Field(default=1, ge=1)
    level: float = Field(default=1.0, gt=0)
    name: str | None = None

    @model_validator(mode="after")
    def check_custom_name(self) -> Self:
        if self.family != "custom":
            return self
        if not self.name:
            raise ValueError("custom operator needs a name")
        try:
            get_custom(self.name)
        except KeyError as exc:
            raise ValueError(exc.args[0]) from None
        return self

    def to_spec(self, boundary_tol: float) -> OperatorSpec:
        if self.family == "custom":
            assert self.name is not None
            return OperatorSpec.custom(self.n, self.name, level=self.level)
        return OperatorSpec.sigma_k(
            self.n,
            self.k,
            root=self.family == "sigma_k",
            level=self.level,
            boundary_tol=boundary_tol,
        )


class GridBlock(_Strict):
    lower: list[float]
    upper: list[float]
    nodes: int = Field(ge=5)


class CheckSolutionBlock(_Strict):
    points: int = Field(default=1000, ge=1)
    radius: float = Field(default=1.0, gt=0)
    center: list[float] | None = None
    grid: GridBlock | None = None


class MobiusBlock(_Strict):
    ops: list[MobiusOpSpec] | None = None
    random_ops: int = Field(default=5, ge=0)
    points: int = Field(default=1000, ge=1)
    radius: float = Field(default=1.0, gt=0)
    tol: float = Field(default=1e-8, gt=0)


class SupConvolveBlock(_Strict):
    eps: float = Field(gt=0)
    grid: GridBlock | None = None
    brute_force_stride: int | None = Field(default=10, ge=1)
    envelope: bool = False
    c11_deltas: list[float] | None = None


class DeformationBlock(_Strict):
    case: DeformationCase = DeformationCase.super
    R: float | None = Field(default=None, gt=0)
    alpha: float | None = Field(default=None, ge=1)
    mu: float | None = Field(default=None, gt=0)
    negative_control_alpha: float | None = Field(default=1.0, ge=1)
    select_tau: bool = True


class HopfBlock(_Strict):
    R: float = Field(default=100.0, gt=0)
    x: list[float] | None = None
    lam_fraction: float = Field(default=0.5, gt=0, lt=1)
    direction: list[float] | None = None
    s_max: float = Field(default=0.1, gt=0)
    s_min: float | None = Field(default=None, gt=0)
    tangency_control: bool = True


class MovingSphereBlock(_Strict):
    R: float = Field(gt=0)
    centers: list[list[float]] | None = None
    count: int = Field(default=8, ge=1)
    dilation: float | None = Field(default=None, gt=0)


class LiouvilleBlock(_Strict):
    R: float = Field(gt=0)


class ExperimentConfig(_Strict):
    """One CLI run. Unknown keys are rejected at every level."""

    command: Command
    name: str = Field(default="experiment", pattern=r"^[A-Za-z0-9_.-]+$")
    seed: int | None = None
    operator: OperatorConfig
    field: FieldSpec
    tolerances: dict[str, float] = Field(default_factory=dict)
    output_dir: str | None = None

    check_solution: CheckSolutionBlock | None = None
    mobius_invariance: MobiusBlock | None = None
    sup_convolve: SupConvolveBlock | None = None
    deformation: DeformationBlock | None = None
    hopf: HopfBlock | None = None
    moving_sphere: MovingSphereBlock | None = None
    liouville: LiouvilleBlock | None = None

    @field_validator("tolerances")
    @classmethod
    def known_tolerances(cls, v: dict[str, float]) -> dict[str, float]:
        unknown = sorted(set(v) - set(Tolerances.model_fields))
        if unknown:
            raise ValueError(f"unknown tolerance keys: {', '.join(unknown)}")
        return v

    @model_validator(mode="after")
    def command_block(self) -> Self:
        """Commands without defaults need their block; others fall back to defaults."""
        key = self.command.value.replace("-", "_")
        if getattr(self, key) is None and self.command in (
            Command.sup_convolve,
            Command.moving_sphere,
            Command.liouville,
        ):
            raise ValueError(f"command {self.command.value} needs a '{key}' block")
        return self


def resolve_tolerances(defaults: BaseModel, overrides: dict[str, float]) -> Tolerances:
    """Tolerances from the settings object, with the config's overrides applied."""
    base = {name: getattr(defaults, name) for name in Tolerances.model_fields}
    return Tolerances.model_validate({**base, **overrides})
