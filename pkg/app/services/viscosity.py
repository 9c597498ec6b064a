"""Sup/inf-convolution, semiconvexity, concave envelopes and the C^{1,1} equivalence check."""

from __future__ import annotations

import itertools

import numpy as np
from scipy.spatial import ConvexHull

from app.errors import DimensionTooHigh, EmptyRegion, UnboundedHessian
from app.models.convolution import ConvolutionKind, ConvolutionResult, EnvelopeResult
from app.models.field import AnalyticField
from app.models.grid import FieldKind, GridField, GridSpec
from app.models.jet import Jet2
from app.models.matrix import FloatArray, SymMatrix
from app.schemas.operator import OperatorSpec
from app.schemas.reports import Aggregate, C11Report, SemiconvexityReport, Verdict
from app.services.conformal import aggregate_verdicts, conformal_hessian, pointwise_verdicts
from app.services.fields import fd_jets, jet_u, u_jet_from_psi
from app.services.symfun import eigen_sym, f_eval_batch
from app.utils.logging import get_logger

logger = get_logger(__name__)

MAX_ENVELOPE_DIMENSION = 3


# ---------------------------------------------------------------------------
# Quadratic-penalty convolutions
# ---------------------------------------------------------------------------


def _lower_envelope_1d(
    f: FloatArray, q: FloatArray, weight: float
) -> tuple[FloatArray, FloatArray]:
    """min_j f[j] + weight (q[i] - q[j])² for every i, with the minimising j.

    Lower envelope of parabolas in physical coordinates, one sweep to build
    and one to read off.
    """
    m = f.size
    hull = np.zeros(m, dtype=np.int64)
    bounds = np.empty(m + 1)
    key = f + weight * q * q
    count = 0
    bounds[0] = -np.inf
    bounds[1] = np.inf
    for j in range(1, m):
        s = (key[j] - key[hull[count]]) / (2.0 * weight * (q[j] - q[hull[count]]))
        while s <= bounds[count]:
            count -= 1
            s = (key[j] - key[hull[count]]) / (2.0 * weight * (q[j] - q[hull[count]]))
        count += 1
        hull[count] = j
        bounds[count] = s
        bounds[count + 1] = np.inf

    values = np.empty(m)
    arg = np.empty(m, dtype=np.int64)
    k = 0
    for i in range(m):
        while bounds[k + 1] < q[i]:
            k += 1
        j = hull[k]
        values[i] = f[j] + weight * (q[i] - q[j]) ** 2
        arg[i] = j
    return values, arg


def _inf_transform(psi: GridField, eps: float) -> tuple[FloatArray, FloatArray]:
    """min over nodes y of ψ(y) + |x - y|²/ε, axis by axis; returns values and argmin indices."""
    grid = psi.grid
    values = np.array(psi.values, dtype=np.float64)
    arg = np.stack(np.indices(grid.shape), axis=-1).astype(np.int64)
    weight = 1.0 / eps
    for axis in range(grid.n):
        q = grid.axis(axis)
        moved = np.moveaxis(values, axis, -1)
        moved_arg = np.moveaxis(arg, axis, -2)
        new_values = np.empty_like(moved)
        new_arg = np.empty_like(moved_arg)
        for line in itertools.product(*(range(s) for s in moved.shape[:-1])):
            line_values, line_arg = _lower_envelope_1d(moved[line], q, weight)
            new_values[line] = line_values
            picked = moved_arg[line][line_arg]
            picked[:, axis] = line_arg
            new_arg[line] = picked
        values = np.moveaxis(new_values, -1, axis)
        arg = np.moveaxis(new_arg, -2, axis)
    return values, arg


def _result(
    psi: GridField, values: FloatArray, arg: FloatArray, eps: float, kind: ConvolutionKind
) -> ConvolutionResult:
    grid = psi.grid
    argopt = np.asarray(grid.origin) + np.asarray(grid.spacing) * arg
    regularized = GridField(grid, values, FieldKind.psi, psi.boundary_policy)
    return ConvolutionResult(regularized, eps, argopt, arg, kind)


def inf_convolve(psi: GridField, eps: float) -> ConvolutionResult:
    """ψ̂^ε(x) = min_y ψ(y) + |x - y|²/ε over grid nodes y (semi-concave, ≤ ψ)."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    values, arg = _inf_transform(psi, eps)
    return _result(psi, values, arg, eps, ConvolutionKind.inf)


def sup_convolve(psi: GridField, eps: float) -> ConvolutionResult:
    """ψ̂_ε(x) = max_y ψ(y) - |x - y|²/ε over grid nodes y (semi-convex, ≥ ψ)."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    negated = psi.with_values(-psi.values, FieldKind.psi)
    values, arg = _inf_transform(negated, eps)
    return _result(psi, -values, arg, eps, ConvolutionKind.sup)


def sup_convolve_brute(psi: GridField, eps: float) -> FloatArray:
    """O(N²) direct evaluation of the discrete sup-convolution."""
    coords = psi.grid.coordinates().reshape((-1, psi.n))
    flat = psi.values.reshape(-1)
    out = np.empty(flat.size)
    for i, x in enumerate(coords):
        out[i] = np.max(flat - np.sum((coords - x) ** 2, axis=1) / eps)
    return out.reshape(psi.grid.shape)


def certify_semiconvex(
    psi_hat: GridField, bound: float, stencil_tol: float = 1e-8
) -> SemiconvexityReport:
    """Check that the FD Hessian's smallest eigenvalue is ≥ -bound at every interior node."""
    nodes = np.asarray(psi_hat.grid.interior_nodes(), dtype=np.int64).reshape((-1, psi_hat.n))
    if nodes.shape[0] == 0:
        raise EmptyRegion("grid has no interior nodes")
    jets = fd_jets(psi_hat, nodes)
    spectrum = eigen_sym(SymMatrix.from_array(jets.hessian))
    min_eigs = spectrum.min_eigenvalue
    bad = min_eigs < -bound - stencil_tol
    violating = [tuple(int(i) for i in node) for node in nodes[bad]]
    if violating:
        logger.warning("Semiconvexity fails at %d nodes for bound %.3e", len(violating), bound)
    return SemiconvexityReport(
        bound=bound,
        stencil_tol=stencil_tol,
        min_eigenvalue=float(np.min(min_eigs)),
        violating_nodes=violating,
        passed=not violating,
    )


# ---------------------------------------------------------------------------
# Concave envelope
# ---------------------------------------------------------------------------


def _box_restriction(
    xi: GridField, box: tuple[tuple[float, ...], tuple[float, ...]]
) -> tuple[GridField, tuple[int, ...]]:
    """The sub-grid of nodes inside ``box``, with the index offset of its first node."""
    lower, upper = (np.asarray(b, dtype=np.float64) for b in box)
    origin = np.asarray(xi.grid.origin)
    spacing = np.asarray(xi.grid.spacing)
    shape = np.asarray(xi.grid.shape)
    first = np.maximum(np.ceil((lower - origin) / spacing - 1e-9), 0).astype(np.int64)
    last = np.minimum(np.floor((upper - origin) / spacing + 1e-9), shape - 1).astype(np.int64)
    try:
        sub = GridSpec(
            tuple(float(v) for v in origin + spacing * first),
            xi.grid.spacing,
            tuple(int(v) for v in last - first + 1),
        )
    except ValueError as exc:
        raise EmptyRegion(f"box {box} holds too few grid nodes: {exc}") from exc
    window = tuple(slice(int(a), int(b) + 1) for a, b in zip(first, last, strict=True))
    restricted = GridField(sub, xi.values[window], xi.kind, xi.boundary_policy)
    return restricted, tuple(int(v) for v in first)


def concave_envelope(
    xi: GridField,
    contact_rel_tol: float = 1e-9,
    *,
    box: tuple[tuple[float, ...], tuple[float, ...]] | None = None,
) -> EnvelopeResult:
    """Smallest concave function ≥ ξ on a box, from the upper hull of the graph.

    Without ``box`` the box is the whole grid.  With it, only the nodes inside
    ``[lower, upper]`` enter; the envelope lives on that sub-grid and contact
    nodes are reported as indices of the input grid.
    """
    n = xi.n
    if n > MAX_ENVELOPE_DIMENSION:
        raise DimensionTooHigh(f"concave envelopes are computed for n <= 3, got n = {n}")
    offset = (0,) * n
    if box is not None:
        xi, offset = _box_restriction(xi, box)
    coords = xi.grid.coordinates().reshape((-1, n))
    values = xi.values.reshape(-1)
    spread = float(values.max() - values.min())
    lower = np.asarray(xi.grid.origin)
    upper = lower + np.asarray(xi.grid.spacing) * (np.asarray(xi.grid.shape) - 1)

    # one point far below makes the cloud full-dimensional
    anchor = np.concatenate([(lower + upper) / 2.0, [values.min() - 10.0 * (spread + 1.0)]])
    cloud = np.vstack([np.column_stack([coords, values]), anchor])
    hull = ConvexHull(cloud)

    normals = hull.equations[:, :n]
    heights = hull.equations[:, n]
    offsets = hull.equations[:, n + 1]
    upward = heights > 1e-12
    planes = -(coords @ normals[upward].T + offsets[upward]) / heights[upward]
    envelope = np.maximum(np.min(planes, axis=1), values)

    contact_tol = contact_rel_tol * (spread if spread > 0 else 1.0)
    touching = values >= envelope - contact_tol
    grid_idx = np.stack(np.indices(xi.grid.shape), axis=-1).reshape((-1, n)) + np.asarray(offset)
    contact = [tuple(int(i) for i in node) for node in grid_idx[touching]]
    result = GridField(xi.grid, envelope.reshape(xi.grid.shape), FieldKind.psi, xi.boundary_policy)
    return EnvelopeResult(result, contact, contact_tol)


# ---------------------------------------------------------------------------
# C^{1,1} equivalence
# ---------------------------------------------------------------------------


def _verdict_class(v: Verdict) -> Aggregate:
    match v:
        case Verdict.on_level:
            return Aggregate.solution
        case Verdict.strict_sub:
            return Aggregate.sub_solution
        case Verdict.strict_super | Verdict.outside_closed_cone:
            return Aggregate.super_solution
        case Verdict.cone_violation:
            return Aggregate.mixed


def _touching_class(
    u_jet: Jet2, spec: OperatorSpec, delta: float, tol: float, jacobi_tol: float
) -> list[Aggregate]:
    """Verdict from the paraboloids ψ ± δ|y - x|² touching ψ at x.

    In u = e^{-ψ} these are u e^{∓δ|y - x|²}, whose Hessian at x is
    ∇²u ∓ 2δu I.  The one above ψ tests the sub inequality, the one below
    tests the super inequality.
    """
    shift = 2.0 * delta * u_jet.value
    above = conformal_hessian(u_jet.shifted_hessian(-shift), spec.n, jacobi_tol=jacobi_tol)
    below = conformal_hessian(u_jet.shifted_hessian(shift), spec.n, jacobi_tol=jacobi_tol)
    f_above, _ = f_eval_batch(above.eigenvalues, spec)
    f_below, below_inside = f_eval_batch(below.eigenvalues, spec)
    sub_ok = ~np.isnan(f_above) & (f_above >= spec.level - tol)
    super_ok = ~below_inside | (f_below <= spec.level + tol)
    out = []
    for s, p in zip(sub_ok, super_ok, strict=True):
        if s and p:
            out.append(Aggregate.solution)
        elif s:
            out.append(Aggregate.sub_solution)
        elif p:
            out.append(Aggregate.super_solution)
        else:
            out.append(Aggregate.mixed)
    return out


def verify_c11_equivalence(
    field: AnalyticField | GridField,
    region: FloatArray | None,
    spec: OperatorSpec,
    tol: float,
    *,
    deltas: tuple[float, ...] = (1e-3, 1e-5, 1e-7, 1e-9),
    hessian_bound: float = 1e3,
    max_kink_fraction: float = 0.1,
    jacobi_tol: float = 1e-12,
) -> C11Report:
    """Compare the a.e. pointwise classification with the touching-paraboloid test.

    Nodes whose Hessian exceeds ``hessian_bound`` are kink nodes: flagged,
    not classified.  Too many of them means the field is not C^{1,1} here.
    A smooth node disagrees when the touching verdict at any δ in ``deltas``
    differs from its pointwise one; strict verdicts need δ small against the margin.
    """
    if isinstance(field, GridField):
        nodes = (
            np.asarray(field.grid.interior_nodes(), dtype=np.int64)
            if region is None
            else np.asarray(region, dtype=np.int64)
        ).reshape((-1, field.n))
        jets = fd_jets(field, nodes)
        u_jets = u_jet_from_psi(jets) if field.kind is FieldKind.psi else jets
        labels = [tuple(int(i) for i in node) for node in nodes]
    else:
        if region is None:
            raise EmptyRegion("analytic fields need an explicit region")
        points = np.asarray(region, dtype=np.float64).reshape((-1, field.n))
        u_jets = jet_u(field, points)
        labels = [(i,) for i in range(points.shape[0])]
    if not labels:
        raise EmptyRegion("no nodes to check")

    frob = np.sqrt(np.sum(u_jets.hessian**2, axis=(-2, -1)))
    kinks = frob > hessian_bound
    kink_fraction = float(np.mean(kinks))
    if kink_fraction > max_kink_fraction:
        raise UnboundedHessian(
            f"{kink_fraction:.1%} of nodes exceed the Hessian bound {hessian_bound:g}"
        )

    cj = conformal_hessian(u_jets, spec.n, jacobi_tol=jacobi_tol)
    values, _ = f_eval_batch(cj.eigenvalues, spec)
    verdicts = pointwise_verdicts(values, cj.eigenvalues, spec, tol)
    smooth = ~kinks
    kept_verdicts = [v for v, keep in zip(verdicts, smooth, strict=True) if keep]
    pointwise = aggregate_verdicts(kept_verdicts, values[smooth], spec, tol).aggregate

    touching = [_touching_class(u_jets, spec, d, tol, jacobi_tol) for d in deltas]
    disagreements = [
        label
        for i, label in enumerate(labels)
        if smooth[i] and any(t[i] is not _verdict_class(verdicts[i]) for t in touching)
    ]
    logger.info(
        "C11 check: %d nodes, %d kinks, %d disagreements",
        len(labels),
        int(np.sum(kinks)),
        len(disagreements),
    )
    return C11Report(
        nodes_checked=int(np.sum(smooth)),
        kink_nodes=[label for label, k in zip(labels, kinks, strict=True) if k],
        deltas=list(deltas),
        pointwise=pointwise,
        disagreements=disagreements,
        passed=not disagreements,
    )
