"""Comparison harness: contact sets, the strict sub/super-solution deformation and Hopf quotients.

All computations run in log form ψ = -ln u. Fields may be analytic (exact
jets) or grid fields (FD jets, multilinear lookups).
"""

from __future__ import annotations

from typing import Literal

import numpy as np

from app.errors import (
    BadParams,
    BracketFailure,
    DomainMismatch,
    EmptyRegion,
    NonConvergence,
    OrderViolation,
    OutOfDomain,
)
from app.models.field import AnalyticField, Constant, DeformedPsi, KelvinOf
from app.models.grid import FieldKind, GridField
from app.models.matrix import FloatArray
from app.schemas.operator import OperatorSpec
from app.schemas.params import DeformationParams
from app.schemas.reports import (
    ContactReport,
    ContactVerdict,
    DeformationCase,
    DeformationReport,
    HopfQuotient,
    TauMargin,
)
from app.services.conformal import evaluate_batch
from app.services.fields import deformation_jet, interpolate, psi_value
from app.utils.logging import get_logger
from app.utils.rng import uniform_ball

logger = get_logger(__name__)

PsiSource = AnalyticField | GridField
Region = Literal["A", "A∩B"]

_SIGN = {DeformationCase.super: -1, DeformationCase.sub: 1}


def psi_at(field: PsiSource, points: FloatArray, *, pole_guard: float = 1e-9) -> FloatArray:
    """ψ at arbitrary points; grid fields are interpolated multilinearly."""
    pts = np.asarray(points, dtype=np.float64)
    if isinstance(field, GridField):
        return interpolate(field.as_psi(), pts)
    return psi_value(field, pts, pole_guard=pole_guard)


# ---------------------------------------------------------------------------
# Contact sets
# ---------------------------------------------------------------------------


def _region_values(
    psi1: PsiSource, psi2: PsiSource, region: FloatArray | None, pole_guard: float
) -> tuple[FloatArray, FloatArray]:
    if isinstance(psi1, GridField) and isinstance(psi2, GridField):
        if psi1.grid != psi2.grid:
            raise DomainMismatch("contact detection needs both grid fields on the same grid")
        v1 = psi1.as_psi().values
        v2 = psi2.as_psi().values
        if region is None:
            return v1.reshape(-1), v2.reshape(-1)
        idx = tuple(np.asarray(region, dtype=np.int64).reshape((-1, psi1.n)).T)
        return v1[idx], v2[idx]
    if region is None:
        raise EmptyRegion("contact detection on analytic fields needs sample points")
    pts = np.asarray(region, dtype=np.float64).reshape((-1, psi1.n))
    return psi_at(psi1, pts, pole_guard=pole_guard), psi_at(psi2, pts, pole_guard=pole_guard)


def detect_contact(
    psi1: PsiSource,
    psi2: PsiSource,
    region: FloatArray | None = None,
    contact_tol: float = 1e-10,
    *,
    pole_guard: float = 1e-9,
) -> ContactReport:
    """Contact set of ψ₁ ≤ ψ₂: either identical, strictly ordered, or touching somewhere.

    ``region`` holds sample points for analytic fields, node indices (or
    ``None`` for every node) when both fields live on one grid. Contact
    indices refer to the flattened region.
    """
    if psi1.n != psi2.n:
        raise DomainMismatch(f"field dimensions differ: {psi1.n} != {psi2.n}")
    v1, v2 = _region_values(psi1, psi2, region, pole_guard)
    if v1.size == 0:
        raise EmptyRegion("contact detection over no points")
    gap = v2 - v1
    worst = int(np.argmin(gap))
    if gap[worst] < -contact_tol:
        raise OrderViolation(
            f"psi1 exceeds psi2 by {-gap[worst]:.3e} at region index {worst}",
            node=worst,
            gap=float(gap[worst]),
        )
    contact = np.flatnonzero(gap <= contact_tol)
    if np.max(np.abs(gap)) <= contact_tol:
        verdict = ContactVerdict.identically_equal
    elif contact.size == 0:
        verdict = ContactVerdict.strictly_ordered
    else:
        verdict = ContactVerdict.contact_detected
    logger.info(
        "Contact check: %s over %d points, min gap %.3e", verdict.value, gap.size, gap[worst]
    )
    return ContactReport(
        verdict=verdict,
        min_gap=float(gap[worst]),
        max_gap=float(np.max(gap)),
        contact_tol=contact_tol,
        contact_set=[int(i) for i in contact],
    )


# ---------------------------------------------------------------------------
# Deformation
# ---------------------------------------------------------------------------


def _check_params(field: PsiSource, params: DeformationParams) -> None:
    if params.n != field.n:
        raise BadParams(f"xhat has dimension {params.n}, field has {field.n}")
    problems = params.violations()
    if problems:
        raise BadParams("; ".join(problems))


def build_deformation(
    psi: AnalyticField, params: DeformationParams, case: DeformationCase = DeformationCase.super
) -> DeformedPsi:
    """ψ̃ = ψ - μ(h-τ)ζ (super case) or ψ + μ(h-τ)ζ (sub case), with closed-form jets."""
    _check_params(psi, params)
    return DeformedPsi(
        base=psi,
        alpha=params.alpha,
        mu=params.mu,
        tau=params.tau,
        radius=params.R,
        xhat=params.xhat,
        sign=_SIGN[case],
    )


def deform_grid(
    psi: GridField, params: DeformationParams, case: DeformationCase = DeformationCase.super
) -> GridField:
    """Grid analogue of ``build_deformation``: the bump is added to the stored ψ values."""
    _check_params(psi, params)
    probe = DeformedPsi(
        Constant(1.0, psi.n), params.alpha, params.mu, params.tau, params.R, params.xhat
    )
    bump = deformation_jet(probe, psi.grid.coordinates()).value
    base = psi.as_psi()
    return base.with_values(base.values + _SIGN[case] * params.mu * bump, FieldKind.psi)


def sample_region(
    params: DeformationParams, count: int, rng: np.random.Generator, *, on: Region = "A∩B"
) -> FloatArray:
    """Points of A (or A∩B), led by the point of A closest to the origin where h peaks."""
    xhat = np.asarray(params.xhat, dtype=np.float64)
    norm = float(np.linalg.norm(xhat))
    closest = xhat * max(norm - params.A_radius, 0.0) / norm
    chunks = [closest[None, :]]
    kept = 1
    while kept < count:
        batch = uniform_ball(rng, 2 * count, params.n, params.A_radius, center=xhat)
        if on == "A∩B":
            batch = batch[np.linalg.norm(batch, axis=1) < params.R]
        chunks.append(batch)
        kept += batch.shape[0]
    return np.concatenate(chunks)[:count]


def _tau_margin(
    psi: AnalyticField,
    params: DeformationParams,
    spec: OperatorSpec,
    case: DeformationCase,
    points: FloatArray,
    jacobi_tol: float,
    pole_guard: float,
) -> tuple[TauMargin, bool]:
    deformed = build_deformation(psi, params, case)
    values, _ = evaluate_batch(deformed, points, spec, jacobi_tol=jacobi_tol, pole_guard=pole_guard)
    inside = ~np.isnan(values)
    outside = int(np.count_nonzero(~inside))
    if case is DeformationCase.super:
        extreme = float(np.max(values[inside])) if np.any(inside) else -np.inf
        gain = spec.level - extreme
    else:
        extreme = float(np.min(values[inside])) if np.any(inside) else np.inf
        gain = extreme - spec.level
    beta = gain / params.mu if params.mu > 0 else 0.0
    ok = beta > 0 and (case is DeformationCase.super or outside == 0)
    margin = TauMargin(
        tau=params.tau, extreme_value=extreme, beta_meas=float(beta), outside_cone=outside
    )
    return margin, ok


def _verify(
    psi: AnalyticField,
    params: DeformationParams,
    spec: OperatorSpec,
    case: DeformationCase,
    points: FloatArray,
    jacobi_tol: float,
    pole_guard: float,
) -> DeformationReport:
    _check_params(psi, params)
    tau0 = params.tau0
    margins = []
    passed = True
    for tau in (0.0, tau0 / 2.0, tau0):
        margin, ok = _tau_margin(
            psi, params.with_tau(tau), spec, case, points, jacobi_tol, pole_guard
        )
        margins.append(margin)
        passed = passed and ok
    return DeformationReport(
        case=case,
        alpha=params.alpha,
        mu=params.mu,
        tau0=tau0,
        samples=int(points.shape[0]),
        margins=margins,
        passed=passed,
    )


def verify_strict_supersolution(
    psi2: AnalyticField,
    params: DeformationParams,
    spec: OperatorSpec,
    points: FloatArray,
    *,
    jacobi_tol: float = 1e-12,
    pole_guard: float = 1e-9,
) -> DeformationReport:
    """β = (level - max F(ψ̃))/μ for τ ∈ {0, τ₀/2, τ₀}; PASS iff all β > 0."""
    report = _verify(psi2, params, spec, DeformationCase.super, points, jacobi_tol, pole_guard)
    logger.info(
        "Strict super-solution check alpha=%g mu=%.3e: passed=%s", params.alpha, params.mu,
        report.passed,
    )
    return report


def verify_strict_subsolution(
    psi1: AnalyticField,
    params: DeformationParams,
    spec: OperatorSpec,
    points: FloatArray,
    *,
    jacobi_tol: float = 1e-12,
    pole_guard: float = 1e-9,
) -> DeformationReport:
    """Mirror of the super case: β = (min F(ψ̃) - level)/μ, and λ must stay in Γ."""
    report = _verify(psi1, params, spec, DeformationCase.sub, points, jacobi_tol, pole_guard)
    logger.info(
        "Strict sub-solution check alpha=%g mu=%.3e: passed=%s", params.alpha, params.mu,
        report.passed,
    )
    return report


def _min_beta(report: DeformationReport) -> float:
    return min(m.beta_meas for m in report.margins)


def auto_select_alpha(
    psi: AnalyticField,
    spec: OperatorSpec,
    *,
    R: float,
    xhat: tuple[float, ...],
    rng: np.random.Generator,
    case: DeformationCase = DeformationCase.super,
    alpha0: float = 1.0,
    doublings: int = 20,
    mu: float | None = None,
    mu_fraction: float = 1e-3,
    mu_halvings: int = 10,
    samples: int = 2000,
    jacobi_tol: float = 1e-12,
    pole_guard: float = 1e-9,
) -> tuple[DeformationParams, DeformationReport]:
    """Double α from ``alpha0`` until the measured margin is positive.

    For each α the A radius is π/(3√α) (capped at R/2) and μ starts at
    ``mu`` or ``mu_fraction`` times the oscillation of ψ over A; μ is halved
    while halving still improves the margin. Every attempt is traced.
    """
    trace: list[dict[str, float | bool]] = []
    params: DeformationParams | None = None
    report: DeformationReport | None = None
    for step in range(doublings + 1):
        alpha = alpha0 * 2.0**step
        a_radius = min(np.pi / (3.0 * np.sqrt(alpha)), R / 2.0)
        params = DeformationParams(alpha=alpha, mu=0.0, R=R, xhat=xhat, A_radius=a_radius)
        points = sample_region(params, samples, rng)
        if mu is None:
            osc = float(np.ptp(psi_value(psi, points, pole_guard=pole_guard)))
            trial_mu = mu_fraction * (osc if osc > 0 else 1.0)
        else:
            trial_mu = mu
        previous = -np.inf
        for _ in range(mu_halvings + 1):
            params = params.with_mu(trial_mu)
            report = _verify(psi, params, spec, case, points, jacobi_tol, pole_guard)
            beta = _min_beta(report)
            trace.append(
                {"alpha": alpha, "mu": trial_mu, "beta_meas": beta, "passed": report.passed}
            )
            logger.debug("alpha=%g mu=%.3e beta=%.3e", alpha, trial_mu, beta)
            if report.passed:
                logger.info("Selected alpha=%g mu=%.3e with beta=%.3e", alpha, trial_mu, beta)
                return params, report.model_copy(update={"search_trace": trace})
            if beta <= previous:
                break
            previous = beta
            trial_mu /= 2.0
            logger.warning("Margin %.3e at alpha=%g; halving mu to %.3e", beta, alpha, trial_mu)
    assert params is not None and report is not None
    logger.warning("No alpha up to %g gave a positive margin", params.alpha)
    return params, report.model_copy(update={"search_trace": trace})


# ---------------------------------------------------------------------------
# τ selection
# ---------------------------------------------------------------------------


def tau0(params: DeformationParams) -> float:
    """sup_A h."""
    return params.tau0


def select_tau1(
    psi1: AnalyticField,
    psi2: AnalyticField,
    params: DeformationParams,
    rng: np.random.Generator,
    *,
    case: DeformationCase = DeformationCase.super,
    on: Region = "A",
    samples: int = 2000,
    tol: float = 1e-12,
    max_steps: int = 60,
    pole_guard: float = 1e-9,
) -> float:
    """τ₁ ∈ [0, τ₀] with inf_A(upper - lower) = 0, by bisection.

    In the super case ψ₂ is deformed and compared from above with ψ₁; in the
    sub case ψ₁ is deformed and compared from below with ψ₂. Either way the
    gap is non-decreasing in τ.
    """
    _check_params(psi1, params)
    points = sample_region(params, samples, rng, on=on)
    anchor = psi1 if case is DeformationCase.super else psi2
    fixed = psi_value(anchor, points, pole_guard=pole_guard)
    moving = psi2 if case is DeformationCase.super else psi1

    def inf_gap(tau: float) -> float:
        deformed = psi_value(
            build_deformation(moving, params.with_tau(tau), case), points, pole_guard=pole_guard
        )
        gap = deformed - fixed if case is DeformationCase.super else fixed - deformed
        return float(np.min(gap))

    top = params.tau0
    low_gap = inf_gap(0.0)
    if abs(low_gap) <= tol:
        return 0.0
    high_gap = inf_gap(top)
    if low_gap > tol or high_gap < -tol:
        raise BracketFailure(
            f"inf gap {low_gap:.3e} at tau=0 and {high_gap:.3e} at tau0={top:.3e} do not bracket 0"
        )
    if abs(high_gap) <= tol:
        return top
    lo, hi = 0.0, top
    mid, value = top, high_gap
    for step in range(max_steps):
        mid = 0.5 * (lo + hi)
        value = inf_gap(mid)
        logger.debug("tau bisection step %d: tau=%.15e gap=%.3e", step, mid, value)
        if abs(value) <= tol:
            break
        if value < 0:
            lo = mid
        else:
            hi = mid
    else:
        raise NonConvergence(
            f"tau bisection did not reach |gap| <= {tol:g} in {max_steps} steps"
            f" (last tau={mid:.6e}, gap={value:.3e})"
        )
    logger.info("Selected tau1=%.6e on %s", mid, on)
    return mid


# ---------------------------------------------------------------------------
# Hopf quotient
# ---------------------------------------------------------------------------


def hopf_s_values(s_max: float, s_min: float) -> list[float]:
    """Geometric sequence s_max, s_max/2, ... stopping at the last value ≥ s_min."""
    if not 0 < s_min <= s_max:
        raise BadParams(f"need 0 < s_min <= s_max, got {s_min}, {s_max}")
    values = [s_max]
    while values[-1] / 2.0 >= s_min:
        values.append(values[-1] / 2.0)
    return values


def hopf_quotient(
    psi1: PsiSource,
    psi2: PsiSource,
    xhat: tuple[float, ...] | FloatArray,
    nu: tuple[float, ...] | FloatArray,
    s_values: list[float] | None = None,
    *,
    s_max: float = 0.1,
    s_min: float | None = None,
    contact_tol: float = 1e-10,
    hopf_tol: float = 1e-8,
    pole_guard: float = 1e-9,
) -> HopfQuotient:
    """(ψ₂ - ψ₁)(x̂ - sν)/s along the inward normal, with a conservative liminf estimate.

    The estimate is the smaller of the last three quotients and the linear
    extrapolation of the last two to s = 0, so a quadratic tangency reads as
    zero. PASS iff the estimate exceeds ``hopf_tol``.
    """
    point = np.asarray(xhat, dtype=np.float64)
    normal = np.asarray(nu, dtype=np.float64)
    normal = normal / np.linalg.norm(normal)
    if s_values is None:
        floor = s_min
        if floor is None:
            floor = 8.0 * psi1.grid.h if isinstance(psi1, GridField) else 1e-6
        s_values = hopf_s_values(s_max, floor)
    s = np.asarray(s_values, dtype=np.float64)
    if s.size < 3 or np.any(s <= 0) or np.any(np.diff(s) >= 0):
        raise BadParams("s_values must be at least three strictly decreasing positive reals")

    touch = psi_at(psi2, point[None, :], pole_guard=pole_guard) - psi_at(
        psi1, point[None, :], pole_guard=pole_guard
    )
    if abs(float(touch[0])) > contact_tol:
        raise BadParams(f"psi1 and psi2 differ by {float(touch[0]):.3e} at xhat; no contact")

    probes = point[None, :] - s[:, None] * normal[None, :]
    gap = psi_at(psi2, probes, pole_guard=pole_guard) - psi_at(psi1, probes, pole_guard=pole_guard)
    quotients = gap / s
    if not np.all(np.isfinite(quotients)):
        raise OutOfDomain("Hopf probe points left the domain of the fields")
    slope = (quotients[-2] - quotients[-1]) / (s[-2] - s[-1])
    extrapolated = quotients[-1] - s[-1] * slope
    liminf = float(min(np.min(quotients[-3:]), extrapolated))
    passed = liminf > hopf_tol
    log = logger.info if passed else logger.warning
    log("Hopf quotient liminf estimate %.6e (passed=%s)", liminf, passed)
    return HopfQuotient(
        xhat=[float(c) for c in point],
        nu=[float(c) for c in normal],
        s_values=[float(v) for v in s],
        quotients=[float(q) for q in quotients],
        extrapolated_liminf=liminf,
        passed=passed,
    )


def sphere_contact_pair(
    v: AnalyticField, x: tuple[float, ...], lam: float, direction: tuple[float, ...] | None = None
) -> tuple[AnalyticField, KelvinOf, FloatArray, FloatArray]:
    """(v, v_{x,λ}, x̂, ν) for the exterior of B_λ(x): x̂ = x + λe, outward normal ν = -e.

    Below the critical radius v_{x,λ} ≤ v outside the sphere, so in ψ-form
    the first field lies below the second.
    """
    n = v.n
    e = np.zeros(n)
    e[0] = 1.0
    if direction is not None:
        e = np.asarray(direction, dtype=np.float64)
        e = e / np.linalg.norm(e)
    center = np.asarray(x, dtype=np.float64)
    return v, KelvinOf(v, tuple(float(c) for c in center), lam), center + lam * e, -e

