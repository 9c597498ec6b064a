"""The conformal Hessian A^u, operator evaluation and sub/super-solution classification."""

from __future__ import annotations

import numpy as np

from app.errors import DomainMismatch, EmptyRegion, NonPositiveU
from app.models.field import AnalyticField
from app.models.grid import FieldKind, GridField, GridSpec
from app.models.jet import ConformalJet, Jet2
from app.models.matrix import FloatArray, Spectrum, SymMatrix
from app.schemas.operator import OperatorSpec
from app.schemas.reports import Aggregate, Classification, PointRecord, Verdict
from app.services.fields import fd_jets, jet_u, u_jet_from_psi
from app.services.symfun import (
    OUTSIDE_CLOSED_CONE,
    OutsideClosedCone,
    eigen_sym,
    f_eval_batch,
    in_cone,
)
from app.utils.logging import get_logger

logger = get_logger(__name__)


def conformal_hessian(u_jet: Jet2, n: int, *, jacobi_tol: float = 1e-12) -> ConformalJet:
    """A^u = -(2/(n-2)) u^{-(n+2)/(n-2)} ∇²u + (2n/(n-2)²) u^{-2n/(n-2)} ∇u⊗∇u
    - (2/(n-2)²) u^{-2n/(n-2)} |∇u|² I, with its spectrum attached."""
    if n < 3:
        raise DomainMismatch(f"the conformal Hessian needs n >= 3, got {n}")
    if u_jet.n != n:
        raise DomainMismatch(f"jet dimension {u_jet.n} != {n}")
    u = u_jet.value
    if np.any(u <= 0):
        raise NonPositiveU("conformal Hessian requested where u <= 0")
    du = u_jet.gradient
    p_hess = u ** (-(n + 2) / (n - 2))
    p_grad = u ** (-2 * n / (n - 2))
    outer = du[..., :, None] * du[..., None, :]
    grad_sq = np.sum(du * du, axis=-1)
    a = (
        (-2.0 / (n - 2)) * p_hess[..., None, None] * u_jet.hessian
        + (2.0 * n / (n - 2) ** 2) * p_grad[..., None, None] * outer
        - (2.0 / (n - 2) ** 2) * (p_grad * grad_sq)[..., None, None] * np.eye(n)
    )
    sym = SymMatrix.from_array(a)
    return ConformalJet(sym, eigen_sym(sym, jacobi_tol), u_jet)


def _grid_u_jets(gf: GridField, nodes: FloatArray) -> Jet2:
    jets = fd_jets(gf, nodes.astype(np.int64))
    return u_jet_from_psi(jets) if gf.kind is FieldKind.psi else jets


def evaluate_batch(
    field: AnalyticField | GridField,
    where: FloatArray,
    spec: OperatorSpec,
    *,
    jacobi_tol: float = 1e-12,
    pole_guard: float = 1e-9,
) -> tuple[FloatArray, ConformalJet]:
    """F at many points (analytic) or node indices (grid); NaN marks λ ∉ Γ̄."""
    if field.n != spec.n:
        raise DomainMismatch(f"field dimension {field.n} != operator dimension {spec.n}")
    if isinstance(field, GridField):
        u_jet = _grid_u_jets(field, np.asarray(where))
    else:
        u_jet = jet_u(field, where, pole_guard=pole_guard)
    cj = conformal_hessian(u_jet, spec.n, jacobi_tol=jacobi_tol)
    values, _ = f_eval_batch(cj.eigenvalues, spec)
    return values, cj


def evaluate_operator(
    field: AnalyticField | GridField,
    x: FloatArray | tuple[float, ...] | tuple[int, ...],
    spec: OperatorSpec,
    *,
    jacobi_tol: float = 1e-12,
    pole_guard: float = 1e-9,
) -> tuple[float | OutsideClosedCone, ConformalJet]:
    """F(J₂[u](x)) = f(λ(A^u(x))) and the conformal jet behind it."""
    values, cj = evaluate_batch(
        field, np.asarray(x)[None, :], spec, jacobi_tol=jacobi_tol, pole_guard=pole_guard
    )
    single = ConformalJet(
        SymMatrix.from_array(cj.a.entries[0]),
        Spectrum(
            cj.spectrum.eigenvalues[0],
            cj.spectrum.eigenvectors[0],
            cj.spectrum.residual,
            cj.spectrum.sweeps,
        ),
        cj.u_jet.take(0),
    )
    value = float(values[0])
    return (OUTSIDE_CLOSED_CONE if np.isnan(value) else value), single


def pointwise_verdicts(
    values: FloatArray, eigenvalues: FloatArray, spec: OperatorSpec, tol: float
) -> list[Verdict]:
    """Verdict per point; F ≤ level or λ ∉ Γ̄ is super-solution evidence."""
    in_open = in_cone(eigenvalues, spec.cone)
    verdicts = []
    for value, open_ in zip(values, in_open, strict=True):
        if np.isnan(value):
            verdicts.append(Verdict.outside_closed_cone)
        elif value >= spec.level + tol:
            verdicts.append(Verdict.strict_sub if open_ else Verdict.cone_violation)
        elif value <= spec.level - tol:
            verdicts.append(Verdict.strict_super)
        else:
            verdicts.append(Verdict.on_level if open_ else Verdict.cone_violation)
    return verdicts


def aggregate_verdicts(
    verdicts: list[Verdict], values: FloatArray, spec: OperatorSpec, tol: float
) -> Classification:
    counts = {v.value: 0 for v in Verdict}
    for v in verdicts:
        counts[v.value] += 1
    sub = counts[Verdict.strict_sub]
    sup = counts[Verdict.strict_super] + counts[Verdict.outside_closed_cone]
    regular = len(verdicts) - counts[Verdict.cone_violation]

    if regular == 0 or (sub and sup):
        aggregate = Aggregate.mixed
    elif sub:
        aggregate = Aggregate.sub_solution
    elif sup:
        aggregate = Aggregate.super_solution
    else:
        aggregate = Aggregate.solution

    marks = np.asarray([v.value for v in verdicts])
    finite = ~np.isnan(values)
    margin = None
    if aggregate is Aggregate.sub_solution:
        margin = float(np.min(values[marks == Verdict.strict_sub.value] - spec.level))
    elif aggregate is Aggregate.super_solution:
        strict = (marks == Verdict.strict_super.value) & finite
        if np.any(strict):
            margin = float(np.min(spec.level - values[strict]))
    deviation = (
        float(np.max(np.abs(values[finite] - spec.level))) if np.any(finite) else float("inf")
    )
    anomalies = [i for i, v in enumerate(verdicts) if v is Verdict.cone_violation]
    return Classification(
        aggregate=aggregate,
        level=spec.level,
        tol=tol,
        counts=counts,
        max_abs_deviation=deviation,
        margin=margin,
        anomalies=anomalies,
    )


def classify(
    field: AnalyticField | GridField,
    region: FloatArray | GridSpec | None,
    spec: OperatorSpec,
    tol: float,
    *,
    jacobi_tol: float = 1e-12,
    pole_guard: float = 1e-9,
) -> Classification:
    """Classify ``field`` as sub-, super- or solution of f(λ(A^u)) = level on ``region``.

    ``region`` is a point set (or a grid whose nodes are used as points) for
    analytic fields; for grid fields it is an array of node indices, or
    ``None`` for every interior node.
    """
    if isinstance(field, GridField):
        where = (
            np.asarray(field.grid.interior_nodes(), dtype=np.int64)
            if region is None
            else np.asarray(region, dtype=np.int64)
        )
        points = where * np.asarray(field.grid.spacing) + np.asarray(field.grid.origin)
    else:
        if region is None:
            raise EmptyRegion("analytic fields need an explicit region")
        where = (
            region.coordinates().reshape((-1, region.n))
            if isinstance(region, GridSpec)
            else np.asarray(region, dtype=np.float64)
        )
        points = where
    where = where.reshape((-1, field.n))
    points = points.reshape((-1, field.n))
    if where.shape[0] == 0:
        raise EmptyRegion("classification requested over no points")

    values, cj = evaluate_batch(field, where, spec, jacobi_tol=jacobi_tol, pole_guard=pole_guard)
    verdicts = pointwise_verdicts(values, cj.eigenvalues, spec, tol)
    result = aggregate_verdicts(verdicts, values, spec, tol)
    if result.anomalies:
        logger.error(
            "ConeViolation at %d points: superlevel value outside the open cone",
            len(result.anomalies),
        )
    min_eigs = cj.spectrum.min_eigenvalue
    result.points = [
        PointRecord(
            point=[float(c) for c in p],
            value=None if np.isnan(val) else float(val),
            min_eigenvalue=float(me),
            verdict=verdict,
        )
        for p, val, me, verdict in zip(points, values, min_eigs, verdicts, strict=True)
    ]
    logger.info(
        "Classified %d points: aggregate=%s max_dev=%.3e",
        len(verdicts),
        result.aggregate.value,
        result.max_abs_deviation,
    )
    return result


def grid_verdict_tol(grid: GridSpec, factor: float) -> float:
    """Verdict tolerance for FD jets: factor * h²."""
    return factor * grid.h**2
