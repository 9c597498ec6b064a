"""Jets, samples and interpolation of positive fields u and their log form ψ = -ln u."""

from __future__ import annotations

import itertools

import numpy as np
from numpy.typing import NDArray
from scipy.interpolate import RegularGridInterpolator

from app.errors import DomainMismatch, HitsPole, NonPositiveU, OutOfDomain, TooCloseToBoundary
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
from app.models.grid import STENCIL_MARGIN, BoundaryPolicy, FieldKind, GridField, GridSpec
from app.models.jet import Jet2
from app.models.matrix import FloatArray
from app.models.mobius_map import (
    Dilate,
    Invert,
    MobiusMap,
    MobiusOp,
    Translate,
    chain_jet,
    pull_jet,
)
from app.repositories.grid_repository import GridRepository
from app.schemas.experiment import (
    BubbleSpec,
    ConstantSpec,
    DilateSpec,
    FieldSpec,
    GridFileSpec,
    InvertSpec,
    KelvinSpec,
    PullbackSpec,
    RadialSpec,
    ScaledSpec,
    TranslateSpec,
    TunedBubbleSpec,
)
from app.schemas.operator import OperatorSpec
from app.services.symfun import solve_diagonal_level
from app.utils.logging import get_logger

logger = get_logger(__name__)

IntArray = NDArray[np.int64]


def _points(x: FloatArray | list[float] | tuple[float, ...]) -> FloatArray:
    return np.asarray(x, dtype=np.float64)


def _zeros_jet(batch: tuple[int, ...], n: int, value: FloatArray) -> Jet2:
    return Jet2(value, np.zeros(batch + (n,)), np.zeros(batch + (n, n)))


# ---------------------------------------------------------------------------
# Exact jets
# ---------------------------------------------------------------------------


def _bubble_jet(f: Bubble, x: FloatArray) -> Jet2:
    n = f.n
    m = (n - 2) / 2
    b2 = f.b**2
    d = x - np.asarray(f.x0)
    q = 1.0 + b2 * np.sum(d * d, axis=-1)
    am = f.a**m
    value = am * q ** (-m)
    gradient = (-2.0 * m * b2 * am * q ** (-m - 1))[..., None] * d
    dd = d[..., :, None] * d[..., None, :]
    hessian = am * (
        (-2.0 * m * b2 * q ** (-m - 1))[..., None, None] * np.eye(n)
        + (4.0 * m * (m + 1) * b2 * b2 * q ** (-m - 2))[..., None, None] * dd
    )
    return Jet2(value, gradient, hessian)


def _radial_jet(f: RadialProfile, x: FloatArray) -> Jet2:
    n = f.n
    z = x - np.asarray(f.center)
    r = np.sqrt(np.sum(z * z, axis=-1))
    if np.any(r > f.max_radius):
        raise OutOfDomain(f"radial profile tabulated only up to r = {f.max_radius}")
    spline = f.spline
    g, g1, g2 = spline(r), spline(r, 1), spline(r, 2)
    tiny = r <= 1e-12 * max(1.0, f.max_radius)
    safe_r = np.where(tiny, 1.0, r)
    e = z / safe_r[..., None]
    ee = e[..., :, None] * e[..., None, :]
    g1_over_r = np.where(tiny, spline(np.zeros_like(r), 2), g1 / safe_r)
    gradient = np.where(tiny[..., None], 0.0, g1[..., None] * e)
    hessian = np.where(
        tiny[..., None, None],
        g2[..., None, None] * np.eye(n),
        g2[..., None, None] * ee + g1_over_r[..., None, None] * (np.eye(n) - ee),
    )
    return Jet2(g, gradient, hessian)


def _kelvin_jet(f: KelvinOf, y: FloatArray, pole_guard: float) -> Jet2:
    # closed form of y ↦ (λ/|y - x|)^{n-2} w(x + λ²(y - x)/|y - x|²)
    n = f.n
    lam2 = f.lam**2
    center = np.asarray(f.center)
    z = y - center
    rho = np.sum(z * z, axis=-1)
    r = np.sqrt(rho)
    if np.any(r <= pole_guard * f.lam):
        raise HitsPole(f"Kelvin transform evaluated at its centre {f.center}")
    image = center + lam2 * z / rho[..., None]

    eye = np.eye(n)
    zz = z[..., :, None] * z[..., None, :]
    rr = rho[..., None, None]
    jac = lam2 * (eye - 2.0 * zz / rr) / rr
    r2 = rho[..., None, None, None] ** 2
    r3 = rho[..., None, None, None] ** 3
    zl, zj, zk = z[..., :, None, None], z[..., None, :, None], z[..., None, None, :]
    second = lam2 * (
        -2.0 * (eye[:, None, :] * zj + eye[:, :, None] * zk + eye[None, :, :] * zl) / r2
        + 8.0 * zl * zj * zk / r3
    )
    scale = f.lam ** (n - 2)
    weight = Jet2(
        scale * r ** (-(n - 2)),
        -(n - 2) * scale * r[..., None] ** (-n) * z,
        -(n - 2) * scale * r[..., None, None] ** (-n) * (eye - n * zz / rr),
    )
    return chain_jet(weight, jac, second, jet_u(f.inner, image, pole_guard=pole_guard))


def map_trail(phi: MobiusMap, x: FloatArray, pole_guard: float) -> list[FloatArray]:
    """x, o1(x), o2(o1(x)), ...; raises at inversion centres."""
    trail = [x]
    for op in phi.ops:
        current = trail[-1]
        if isinstance(op, Invert):
            dist = np.sqrt(np.sum((current - np.asarray(op.center)) ** 2, axis=-1))
            if np.any(dist <= pole_guard):
                raise HitsPole(f"point maps onto the inversion centre {op.center}")
        trail.append(op.apply(current))
    return trail


def _pullback_jet(f: MobiusPullback, x: FloatArray, pole_guard: float) -> Jet2:
    trail = map_trail(f.phi, x, pole_guard)
    jet = jet_u(f.inner, trail[-1], pole_guard=pole_guard)
    for op, point in zip(reversed(f.phi.ops), reversed(trail[:-1]), strict=True):
        jet = pull_jet(op, point, jet)
    return jet


def deformation_jet(f: DeformedPsi, x: FloatArray) -> Jet2:
    """Jet of (h - τ)ζ with h = e^{-α|x|²} - e^{-αR²}, ζ = cos(√α (x₁ - x̂₁))."""
    n = f.n
    alpha = f.alpha
    root = np.sqrt(alpha)
    big_e = np.exp(-alpha * np.sum(x * x, axis=-1))
    h = big_e - np.exp(-alpha * f.radius**2)
    g = h - f.tau
    dh = (-2.0 * alpha * big_e)[..., None] * x
    outer = x[..., :, None] * x[..., None, :]
    d2h = big_e[..., None, None] * (4.0 * alpha**2 * outer - 2.0 * alpha * np.eye(n))

    phase = root * (x[..., 0] - f.xhat[0])
    zeta = np.cos(phase)
    e1 = np.zeros(n)
    e1[0] = 1.0
    dzeta = (-root * np.sin(phase))[..., None] * e1
    d2zeta = (-alpha * zeta)[..., None, None] * np.outer(e1, e1)

    cross = dh[..., :, None] * dzeta[..., None, :]
    return Jet2(
        g * zeta,
        zeta[..., None] * dh + g[..., None] * dzeta,
        zeta[..., None, None] * d2h
        + cross
        + np.swapaxes(cross, -1, -2)
        + g[..., None, None] * d2zeta,
    )


def jet_u(
    field: AnalyticField,
    x: FloatArray | list[float] | tuple[float, ...],
    *,
    pole_guard: float = 1e-9,
) -> Jet2:
    """Exact value, gradient and Hessian of u at x (batched over leading axes)."""
    x = _points(x)
    batch = x.shape[:-1]
    if x.shape[-1] != field.n:
        raise OutOfDomain(f"point dimension {x.shape[-1]} != field dimension {field.n}")
    match field:
        case Constant():
            return _zeros_jet(batch, field.n, np.full(batch, field.c))
        case Bubble():
            return _bubble_jet(field, x)
        case RadialProfile():
            return _radial_jet(field, x)
        case KelvinOf():
            return _kelvin_jet(field, x, pole_guard)
        case MobiusPullback():
            return _pullback_jet(field, x, pole_guard)
        case ScalarMultiple():
            inner = jet_u(field.inner, x, pole_guard=pole_guard)
            return Jet2(field.c * inner.value, field.c * inner.gradient, field.c * inner.hessian)
        case DeformedPsi():
            return u_jet_from_psi(jet_psi(field, x, pole_guard=pole_guard))


def psi_jet_from_u(jet: Jet2) -> Jet2:
    """ψ = -ln u, ∇ψ = -∇u/u, ∇²ψ = -∇²u/u + ∇u⊗∇u/u²."""
    u = jet.value
    if np.any(u <= 0):
        raise NonPositiveU("log form needs u > 0")
    du = jet.gradient
    outer = du[..., :, None] * du[..., None, :]
    return Jet2(
        -np.log(u),
        -du / u[..., None],
        -jet.hessian / u[..., None, None] + outer / (u**2)[..., None, None],
    )


def u_jet_from_psi(jet: Jet2) -> Jet2:
    """u = e^{-ψ}, ∇u = -u∇ψ, ∇²u = u(∇ψ⊗∇ψ - ∇²ψ)."""
    u = np.exp(-jet.value)
    dpsi = jet.gradient
    outer = dpsi[..., :, None] * dpsi[..., None, :]
    return Jet2(u, -u[..., None] * dpsi, u[..., None, None] * (outer - jet.hessian))


def jet_psi(
    field: AnalyticField,
    x: FloatArray | list[float] | tuple[float, ...],
    *,
    pole_guard: float = 1e-9,
) -> Jet2:
    x = _points(x)
    if isinstance(field, DeformedPsi):
        base = jet_psi(field.base, x, pole_guard=pole_guard)
        bump = deformation_jet(field, x)
        s = field.sign * field.mu
        return Jet2(
            base.value + s * bump.value,
            base.gradient + s * bump.gradient,
            base.hessian + s * bump.hessian,
        )
    try:
        return psi_jet_from_u(jet_u(field, x, pole_guard=pole_guard))
    except NonPositiveU as exc:
        raise OutOfDomain(str(exc)) from exc


# ---------------------------------------------------------------------------
# Values only
# ---------------------------------------------------------------------------


def field_value(
    field: AnalyticField,
    x: FloatArray | list[float] | tuple[float, ...],
    *,
    pole_guard: float = 1e-9,
) -> FloatArray:
    """u(x) without derivatives."""
    x = _points(x)
    match field:
        case Constant():
            return np.full(x.shape[:-1], field.c)
        case Bubble():
            d = x - np.asarray(field.x0)
            q = 1.0 + field.b**2 * np.sum(d * d, axis=-1)
            return (field.a / q) ** ((field.n - 2) / 2)
        case RadialProfile():
            r = np.sqrt(np.sum((x - np.asarray(field.center)) ** 2, axis=-1))
            if np.any(r > field.max_radius):
                raise OutOfDomain(f"radial profile tabulated only up to r = {field.max_radius}")
            return np.asarray(field.spline(r))
        case KelvinOf():
            center = np.asarray(field.center)
            z = x - center
            rho = np.sum(z * z, axis=-1)
            r = np.sqrt(rho)
            if np.any(r <= pole_guard * field.lam):
                raise HitsPole(f"Kelvin transform evaluated at its centre {field.center}")
            image = center + field.lam**2 * z / rho[..., None]
            inner = field_value(field.inner, image, pole_guard=pole_guard)
            return (field.lam / r) ** (field.n - 2) * inner
        case MobiusPullback():
            trail = map_trail(field.phi, x, pole_guard)
            weight = np.ones(x.shape[:-1])
            for op, point in zip(field.phi.ops, trail[:-1], strict=True):
                weight = weight * op.weight(point).value
            return weight * field_value(field.inner, trail[-1], pole_guard=pole_guard)
        case ScalarMultiple():
            return field.c * field_value(field.inner, x, pole_guard=pole_guard)
        case DeformedPsi():
            return np.exp(-psi_value(field, x, pole_guard=pole_guard))


def psi_value(
    field: AnalyticField,
    x: FloatArray | list[float] | tuple[float, ...],
    *,
    pole_guard: float = 1e-9,
) -> FloatArray:
    x = _points(x)
    if isinstance(field, DeformedPsi):
        big_e = np.exp(-field.alpha * np.sum(x * x, axis=-1))
        h = big_e - np.exp(-field.alpha * field.radius**2)
        zeta = np.cos(np.sqrt(field.alpha) * (x[..., 0] - field.xhat[0]))
        base = psi_value(field.base, x, pole_guard=pole_guard)
        return base + field.sign * field.mu * (h - field.tau) * zeta
    return -np.log(field_value(field, x, pole_guard=pole_guard))


# ---------------------------------------------------------------------------
# Grid fields
# ---------------------------------------------------------------------------


def sample(
    field: AnalyticField,
    grid: GridSpec,
    *,
    kind: FieldKind = FieldKind.u,
    boundary_policy: BoundaryPolicy = BoundaryPolicy.reject,
) -> GridField:
    """Pointwise evaluation on every node."""
    coords = grid.coordinates()
    if kind is FieldKind.psi:
        values = psi_value(field, coords)
    else:
        values = field_value(field, coords)
        if np.any(values <= 0):
            raise OutOfDomain("sampled field is not positive on the grid")
    return GridField(grid, values, kind, boundary_policy)


def _padded(gf: GridField) -> tuple[FloatArray, int]:
    match gf.boundary_policy:
        case BoundaryPolicy.reject:
            return np.asarray(gf.values), 0
        case BoundaryPolicy.clip:
            return np.pad(gf.values, STENCIL_MARGIN, mode="edge"), STENCIL_MARGIN
        case BoundaryPolicy.reflect:
            return np.pad(gf.values, STENCIL_MARGIN, mode="reflect"), STENCIL_MARGIN


def _check_nodes(gf: GridField, nodes: IntArray) -> None:
    shape = np.asarray(gf.grid.shape)
    if np.any(nodes < 0) or np.any(nodes >= shape):
        raise OutOfDomain("node index outside the grid")
    if gf.boundary_policy is BoundaryPolicy.reject:
        near = (nodes < STENCIL_MARGIN) | (nodes >= shape - STENCIL_MARGIN)
        if np.any(near):
            bad = tuple(int(i) for i in nodes[np.argmax(np.any(near, axis=-1))])
            raise TooCloseToBoundary(
                f"node {bad} is closer than {STENCIL_MARGIN} nodes to the boundary"
            )


def fd_jets(gf: GridField, nodes: IntArray | list[tuple[int, ...]]) -> Jet2:
    """Centred second-order finite-difference jets at a batch of nodes, shape ``(m, n)``."""
    idx = np.asarray(nodes, dtype=np.int64).reshape((-1, gf.n))
    _check_nodes(gf, idx)
    padded, pad = _padded(gf)
    n = gf.n
    h = np.asarray(gf.grid.spacing)
    eye = np.eye(n, dtype=np.int64)

    def at(offset: IntArray) -> FloatArray:
        return padded[tuple((idx + pad + offset).T)]

    center = at(np.zeros(n, dtype=np.int64))
    gradient = np.empty(idx.shape)
    hessian = np.empty(idx.shape + (n,))
    for i in range(n):
        plus, minus = at(eye[i]), at(-eye[i])
        gradient[:, i] = (plus - minus) / (2.0 * h[i])
        hessian[:, i, i] = (plus - 2.0 * center + minus) / h[i] ** 2
    for i, j in itertools.combinations(range(n), 2):
        cross = (
            at(eye[i] + eye[j]) - at(eye[i] - eye[j]) - at(-eye[i] + eye[j]) + at(-eye[i] - eye[j])
        ) / (4.0 * h[i] * h[j])
        hessian[:, i, j] = cross
        hessian[:, j, i] = cross
    return Jet2(center, gradient, hessian)


def fd_jet(gf: GridField, node: tuple[int, ...]) -> Jet2:
    return fd_jets(gf, [node]).take(0)


def interior_fd_jets(gf: GridField) -> tuple[IntArray, Jet2]:
    """FD jets at every node at least the stencil margin away from the boundary."""
    nodes = np.asarray(gf.grid.interior_nodes(), dtype=np.int64).reshape((-1, gf.n))
    return nodes, fd_jets(gf, nodes)


def interpolate(
    gf: GridField, points: FloatArray | list[list[float]], method: str = "linear"
) -> FloatArray:
    """Multilinear (or nearest-node) values of the stored grid values at arbitrary points."""
    pts = np.asarray(points, dtype=np.float64)
    axes = tuple(gf.grid.axis(i) for i in range(gf.n))
    interp = RegularGridInterpolator(axes, gf.values, method=method, bounds_error=True)
    try:
        return np.asarray(interp(pts))
    except ValueError as exc:
        raise OutOfDomain(f"interpolation point outside the grid box: {exc}") from exc


# ---------------------------------------------------------------------------
# Constructors
# ---------------------------------------------------------------------------


def tuned_bubble(
    b: float, x0: tuple[float, ...], spec: OperatorSpec, scale: float = 1.0
) -> Bubble | ScalarMultiple:
    """Bubble with 2b²/a² = t*, the diagonal level of ``spec``; optionally times ``scale``."""
    t_star = solve_diagonal_level(spec)
    if t_star <= 0:
        raise ValueError(f"diagonal level {t_star} is not positive: no bubble solves this operator")
    bubble = Bubble(a=b * float(np.sqrt(2.0 / t_star)), b=b, x0=tuple(float(v) for v in x0))
    if scale == 1.0:
        return bubble
    return ScalarMultiple(scale, bubble)


def _mobius_op(spec: TranslateSpec | DilateSpec | InvertSpec, n: int) -> MobiusOp:
    match spec:
        case TranslateSpec():
            coords = spec.vector
            op: MobiusOp = Translate(tuple(coords))
        case DilateSpec():
            return Dilate(spec.r)
        case InvertSpec():
            coords = spec.center
            op = Invert(tuple(coords))
    if len(coords) != n:
        raise DomainMismatch(f"{spec.op} generator has {len(coords)} coordinates, expected {n}")
    return op


def mobius_map_of(n: int, ops: list[TranslateSpec | DilateSpec | InvertSpec]) -> MobiusMap:
    return MobiusMap(n, tuple(_mobius_op(op, n) for op in ops))


def build_field(
    spec: FieldSpec, operator: OperatorSpec, *, grids: GridRepository | None = None
) -> AnalyticField | GridField:
    """Field described by a config entry; every field must live in R^n of the operator."""
    n = operator.n

    def vector(values: list[float], what: str) -> tuple[float, ...]:
        if len(values) != n:
            raise DomainMismatch(f"{what} has {len(values)} entries, operator dimension is {n}")
        return tuple(float(v) for v in values)

    def analytic(inner: FieldSpec) -> AnalyticField:
        built = build_field(inner, operator, grids=grids)
        if isinstance(built, GridField):
            raise DomainMismatch("grid fields cannot be wrapped by analytic transforms")
        return built

    match spec:
        case ConstantSpec():
            return Constant(spec.c, n)
        case BubbleSpec():
            return Bubble(spec.a, spec.b, vector(spec.x0, "x0"))
        case TunedBubbleSpec():
            return tuned_bubble(spec.b, vector(spec.x0, "x0"), operator, spec.scale)
        case ScaledSpec():
            return ScalarMultiple(spec.c, analytic(spec.inner))
        case KelvinSpec():
            return KelvinOf(analytic(spec.inner), vector(spec.center, "Kelvin centre"), spec.lam)
        case PullbackSpec():
            return MobiusPullback(analytic(spec.inner), mobius_map_of(n, list(spec.ops)))
        case RadialSpec():
            return RadialProfile(
                tuple(spec.radii), tuple(spec.values), vector(spec.center, "radial centre")
            )
        case GridFileSpec():
            gf = (grids or GridRepository()).load(spec.path)
            if gf.n != n:
                raise DomainMismatch(f"grid dimension {gf.n} != operator dimension {n}")
            if spec.kind is not None and spec.kind is not gf.kind:
                gf = gf.as_psi() if spec.kind is FieldKind.psi else gf.as_u()
            return GridField(gf.grid, gf.values, gf.kind, spec.boundary_policy)
