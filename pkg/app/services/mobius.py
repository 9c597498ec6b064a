"""Möbius maps acting on points and fields, and the conformal invariance check."""

from __future__ import annotations

import numpy as np

from app.errors import DomainMismatch
from app.models.field import AnalyticField, KelvinOf, MobiusPullback
from app.models.grid import GridSpec
from app.models.matrix import FloatArray
from app.models.mobius_map import Invert, KelvinTransform, MobiusMap
from app.schemas.operator import OperatorSpec
from app.schemas.reports import InvarianceReport
from app.services.conformal import evaluate_batch
from app.services.fields import map_trail, sample
from app.utils.logging import get_logger

logger = get_logger(__name__)


def apply_map(phi: MobiusMap, x: FloatArray, *, pole_guard: float = 1e-9) -> FloatArray:
    """φ(x), ops applied left to right."""
    return map_trail(phi, np.asarray(x, dtype=np.float64), pole_guard)[-1]


def jacobian_det(phi: MobiusMap, x: FloatArray, *, pole_guard: float = 1e-9) -> FloatArray:
    """|det Dφ(x)| as the product of the generators' factors along the trail."""
    trail = map_trail(phi, np.asarray(x, dtype=np.float64), pole_guard)
    det = np.ones(trail[0].shape[:-1])
    for op, point in zip(phi.ops, trail[:-1], strict=True):
        det = det * np.abs(op.jacobian_det(point))
    return det


def jacobian_matrix(phi: MobiusMap, x: FloatArray, *, pole_guard: float = 1e-9) -> FloatArray:
    """Dφ(x) by the chain rule (later factors on the left)."""
    trail = map_trail(phi, np.asarray(x, dtype=np.float64), pole_guard)
    n = phi.n
    jac = np.broadcast_to(np.eye(n), trail[0].shape + (n,)).copy()
    for op, point in zip(phi.ops, trail[:-1], strict=True):
        jac = np.einsum("...ij,...jk->...ik", op.jacobian(point), jac)
    return jac


def pullback_field(w: AnalyticField, phi: MobiusMap) -> MobiusPullback:
    """w_φ = |J_φ|^{(n-2)/(2n)} w∘φ."""
    if w.n != phi.n:
        raise DomainMismatch(f"map dimension {phi.n} != field dimension {w.n}")
    return MobiusPullback(w, phi)


def kelvin(w: AnalyticField, kt: KelvinTransform) -> KelvinOf:
    if w.n != len(kt.x):
        raise DomainMismatch(f"Kelvin centre dimension {len(kt.x)} != field dimension {w.n}")
    return KelvinOf(w, kt.x, kt.lam)


def kelvin_via_pullback(w: AnalyticField, kt: KelvinTransform) -> MobiusPullback:
    """The same transform assembled from translations, dilations and a unit inversion."""
    return pullback_field(w, kt.as_map())


def pole_distance(phi: MobiusMap, x: FloatArray) -> FloatArray:
    """Smallest distance from the trail of x to an inversion centre (inf without inversions)."""
    current = np.asarray(x, dtype=np.float64)
    dist = np.full(current.shape[:-1], np.inf)
    for op in phi.ops:
        if isinstance(op, Invert):
            gap = np.linalg.norm(current - np.asarray(op.center), axis=-1)
            dist = np.minimum(dist, gap)
            current = op.apply(np.where(gap[..., None] > 0, current, np.nan))
        else:
            current = op.apply(current)
    return dist


def _discrepancies(lhs: FloatArray, rhs: FloatArray) -> FloatArray:
    both_out = np.isnan(lhs) & np.isnan(rhs)
    diff = np.abs(lhs - rhs)
    return np.where(both_out, 0.0, np.where(np.isnan(diff), np.inf, diff))


def check_conformal_invariance(
    w: AnalyticField,
    phi: MobiusMap,
    points: FloatArray,
    spec: OperatorSpec,
    *,
    tol: float = 1e-8,
    jacobi_tol: float = 1e-12,
    pole_guard: float = 1e-9,
) -> InvarianceReport:
    """Compare F(A^{w_φ}(x)) with F(A^w(φ(x))) and the two eigenvalue lists."""
    pts = np.asarray(points, dtype=np.float64).reshape((-1, phi.n))
    pulled = pullback_field(w, phi)
    lhs, lhs_jet = evaluate_batch(pulled, pts, spec, jacobi_tol=jacobi_tol, pole_guard=pole_guard)
    images = apply_map(phi, pts, pole_guard=pole_guard)
    rhs, rhs_jet = evaluate_batch(w, images, spec, jacobi_tol=jacobi_tol, pole_guard=pole_guard)

    disc = _discrepancies(lhs, rhs)
    eig_disc = np.max(np.abs(lhs_jet.eigenvalues - rhs_jet.eigenvalues), axis=-1)
    max_disc = float(np.max(disc)) if disc.size else 0.0
    max_eig = float(np.max(eig_disc)) if eig_disc.size else 0.0
    passed = max_disc <= tol and max_eig <= tol
    logger.info(
        "Conformal invariance over %d points: max |dF|=%.3e max |dλ|=%.3e",
        pts.shape[0],
        max_disc,
        max_eig,
    )
    return InvarianceReport(
        points=int(pts.shape[0]),
        max_discrepancy=max_disc,
        max_eigen_discrepancy=max_eig,
        tol=tol,
        passed=passed,
        discrepancies=[float(d) for d in np.maximum(disc, eig_disc)],
    )


def grid_invariance_discrepancy(
    w: AnalyticField,
    phi: MobiusMap,
    grid: GridSpec,
    nodes: FloatArray,
    spec: OperatorSpec,
    *,
    pole_guard: float = 1e-9,
) -> float:
    """max |F(FD jets of sampled w_φ) - F(A^w(φ(x)))| over the given nodes."""
    pulled = sample(pullback_field(w, phi), grid)
    idx = np.asarray(nodes, dtype=np.int64).reshape((-1, phi.n))
    lhs, _ = evaluate_batch(pulled, idx, spec)
    points = idx * np.asarray(grid.spacing) + np.asarray(grid.origin)
    rhs, _ = evaluate_batch(w, apply_map(phi, points, pole_guard=pole_guard), spec)
    return float(np.max(_discrepancies(lhs, rhs)))
