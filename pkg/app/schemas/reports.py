"""Pydantic schemas for verification reports."""

import enum

from pydantic import BaseModel, ConfigDict, Field

from app.schemas.params import BubbleParams


class Verdict(enum.StrEnum):
    strict_sub = "StrictSub"
    strict_super = "StrictSuper"
    on_level = "OnLevel"
    outside_closed_cone = "OutsideClosedCone"
    cone_violation = "ConeViolation"


class Aggregate(enum.StrEnum):
    solution = "Solution"
    sub_solution = "SubSolution"
    super_solution = "SuperSolution"
    mixed = "Mixed"


class PointRecord(BaseModel):
    """One evaluation point of a classification."""

    point: list[float]
    value: float | None
    min_eigenvalue: float
    verdict: Verdict


class Classification(BaseModel):
    """Pointwise verdicts and their aggregate."""

    aggregate: Aggregate
    level: float
    tol: float
    counts: dict[str, int]
    max_abs_deviation: float
    margin: float | None = None
    anomalies: list[int] = Field(default_factory=list)
    points: list[PointRecord] = Field(default_factory=list, exclude=True)


class InvarianceReport(BaseModel):
    """Both sides of F(A^{w_φ}(x)) = F(A^w(φ(x))) compared at sample points."""

    points: int
    max_discrepancy: float
    max_eigen_discrepancy: float
    tol: float
    passed: bool
    discrepancies: list[float] = Field(default_factory=list, exclude=True)


class SemiconvexityReport(BaseModel):
    bound: float
    stencil_tol: float
    min_eigenvalue: float
    violating_nodes: list[tuple[int, ...]] = Field(default_factory=list)
    passed: bool


class C11Report(BaseModel):
    """Pointwise classification vs. the paraboloid touching test at sampled nodes."""

    nodes_checked: int
    kink_nodes: list[tuple[int, ...]] = Field(default_factory=list)
    deltas: list[float]
    pointwise: Aggregate
    disagreements: list[tuple[int, ...]] = Field(default_factory=list)
    passed: bool


class ContactVerdict(enum.StrEnum):
    identically_equal = "IdenticallyEqual"
    strictly_ordered = "StrictlyOrdered"
    contact_detected = "ContactDetected"


class ContactReport(BaseModel):
    verdict: ContactVerdict
    min_gap: float
    max_gap: float
    contact_tol: float
    contact_set: list[int] = Field(default_factory=list)


class DeformationCase(enum.StrEnum):
    super = "super"
    sub = "sub"


class TauMargin(BaseModel):
    tau: float
    extreme_value: float
    beta_meas: float
    outside_cone: int


class DeformationReport(BaseModel):
    """Measured margin β of the deformed field over a dense sample of A∩B."""

    case: DeformationCase
    alpha: float
    mu: float
    tau0: float
    samples: int
    margins: list[TauMargin]
    passed: bool
    search_trace: list[dict[str, float | bool]] = Field(default_factory=list)


class HopfQuotient(BaseModel):
    xhat: list[float]
    nu: list[float]
    s_values: list[float]
    quotients: list[float]
    extrapolated_liminf: float
    passed: bool


class MovingSphereState(BaseModel):
    x: list[float]
    lambda0: float
    lambda_bar: float
    R: float
    violation_gap: float
    capped: bool = False

    model_config = ConfigDict(frozen=True)


class LiouvilleKind(enum.StrEnum):
    constant = "Constant"
    bubble = "Bubble"
    inconclusive = "Inconclusive"


class LiouvilleVerdict(BaseModel):
    kind: LiouvilleKind
    params: BubbleParams | None = None
    reason: str | None = None
    alpha: float
    alpha_infinite: bool = False
    lower_bound: float
    residuals: dict[str, float] = Field(default_factory=dict)
    identity_errors: list[float] = Field(default_factory=list)
    states: list[MovingSphereState] = Field(default_factory=list)
