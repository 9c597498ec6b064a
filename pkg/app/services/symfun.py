"""Spectral computations, elementary symmetric functions and Gårding cones."""

from __future__ import annotations

import enum
import math
from collections.abc import Callable
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray
from scipy.optimize import brentq

from app.errors import BadK, NonConvergence
from app.models.matrix import FloatArray, Spectrum, SymMatrix
from app.schemas.operator import ConeKind, ConeSpec, FFamily, OperatorSpec
from app.utils.logging import get_logger

logger = get_logger(__name__)

BoolArray = NDArray[np.bool_]


class OutsideClosedCone(enum.Enum):
    """Returned by ``f_eval`` when λ is not in the closed cone Γ̄."""

    OUTSIDE = "OutsideClosedCone"

    def __repr__(self) -> str:
        return self.value


OUTSIDE_CLOSED_CONE = OutsideClosedCone.OUTSIDE


# ---------------------------------------------------------------------------
# Eigenvalues
# ---------------------------------------------------------------------------


def eigen_sym(m: SymMatrix, tol: float = 1e-12, max_sweeps: int = 64) -> Spectrum:
    """Cyclic Jacobi eigen-decomposition of one matrix or a stack of them.

    Sweeps stop once the off-diagonal Frobenius norm is at most
    ``tol * ‖M‖_F`` for every matrix of the batch.  Eigenvalues come back
    ascending with matching eigenvector columns.
    """
    entries = m.entries
    n = m.n
    batch = m.batch_shape
    a = np.array(entries.reshape((-1, n, n)), dtype=np.float64)
    count = a.shape[0]
    v = np.broadcast_to(np.eye(n), (count, n, n)).copy()
    norm = np.sqrt(np.sum(a * a, axis=(1, 2)))
    threshold = tol * norm
    rows = np.arange(count)
    off_mask = ~np.eye(n, dtype=bool)

    sweeps = 0
    while True:
        off = np.sqrt(np.sum(a[:, off_mask] ** 2, axis=1))
        if np.all(off <= threshold):
            break
        if sweeps >= max_sweeps:
            worst = float(np.max(off - threshold))
            raise NonConvergence(
                f"Jacobi did not converge in {max_sweeps} sweeps (off-diagonal excess {worst:.3e})"
            )
        sweeps += 1
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[rows, p, q]
                active = apq != 0.0
                if not np.any(active):
                    continue
                safe = np.where(active, apq, 1.0)
                theta = (a[rows, q, q] - a[rows, p, p]) / (2.0 * safe)
                sign = np.where(theta >= 0.0, 1.0, -1.0)
                t = np.where(active, sign / (np.abs(theta) + np.sqrt(theta * theta + 1.0)), 0.0)
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                cc, ss = c[:, None], s[:, None]

                col_p = a[:, :, p].copy()
                col_q = a[:, :, q].copy()
                a[:, :, p] = cc * col_p - ss * col_q
                a[:, :, q] = ss * col_p + cc * col_q
                row_p = a[:, p, :].copy()
                row_q = a[:, q, :].copy()
                a[:, p, :] = cc * row_p - ss * row_q
                a[:, q, :] = ss * row_p + cc * row_q

                vec_p = v[:, :, p].copy()
                vec_q = v[:, :, q].copy()
                v[:, :, p] = cc * vec_p - ss * vec_q
                v[:, :, q] = ss * vec_p + cc * vec_q

    diag = np.diagonal(a, axis1=1, axis2=2)
    order = np.argsort(diag, axis=1, kind="stable")
    eigenvalues = np.take_along_axis(diag, order, axis=1)
    eigenvectors = np.take_along_axis(v, order[:, None, :], axis=2)

    original = entries.reshape((-1, n, n))
    mv = np.einsum("bij,bjk->bik", original, eigenvectors)
    res = np.sqrt(np.sum((mv - eigenvectors * eigenvalues[:, None, :]) ** 2, axis=1))
    scale = np.maximum(1.0, norm)
    residual = float(np.max(res / scale[:, None])) if count else 0.0

    return Spectrum(
        eigenvalues=eigenvalues.reshape(batch + (n,)),
        eigenvectors=eigenvectors.reshape(batch + (n, n)),
        residual=residual,
        sweeps=sweeps,
    )


# ---------------------------------------------------------------------------
# Elementary symmetric functions and cones
# ---------------------------------------------------------------------------


def elementary_symmetric(lam: FloatArray, k: int) -> FloatArray:
    """σ_0..σ_k of λ along the last axis, shape ``(..., k + 1)``.

    λ is sorted first so that permuted inputs give bit-identical results.
    """
    values = np.sort(np.asarray(lam, dtype=np.float64), axis=-1)
    e = np.zeros(values.shape[:-1] + (k + 1,))
    e[..., 0] = 1.0
    for i in range(values.shape[-1]):
        li = values[..., i]
        for j in range(k, 0, -1):
            e[..., j] = e[..., j] + li * e[..., j - 1]
    return e


def sigma_k(lam: FloatArray, k: int) -> FloatArray:
    lam = np.asarray(lam, dtype=np.float64)
    n = lam.shape[-1]
    if not 1 <= k <= n:
        raise BadK(f"k must satisfy 1 <= k <= n = {n}, got {k}")
    return elementary_symmetric(lam, k)[..., k]


@dataclass(frozen=True)
class CustomOperator:
    """A user operator: ``f(λ)`` and a signed ``margin(λ)`` with Γ = {margin > 0}."""

    name: str
    f: Callable[[FloatArray], FloatArray]
    margin: Callable[[FloatArray], FloatArray]


_REGISTRY: dict[str, CustomOperator] = {}


def register_custom(
    name: str,
    f: Callable[[FloatArray], FloatArray],
    margin: Callable[[FloatArray], FloatArray],
) -> CustomOperator:
    op = CustomOperator(name, f, margin)
    _REGISTRY[name] = op
    return op


def get_custom(name: str) -> CustomOperator:
    try:
        return _REGISTRY[name]
    except KeyError:
        raise KeyError(f"no custom operator registered as {name!r}") from None


def _shifted_trace(lam: FloatArray) -> FloatArray:
    return 1.0 + np.sum(lam, axis=-1) / lam.shape[-1]


def _shifted_trace_margin(lam: FloatArray) -> FloatArray:
    return np.sum(lam, axis=-1) + lam.shape[-1] / 2.0


# f(0) = 1 with 0 in the open cone: constants solve this one
register_custom("shifted_trace", _shifted_trace, _shifted_trace_margin)


def cone_margins(lam: FloatArray, cone: ConeSpec) -> FloatArray:
    """Signed quantities whose positivity defines Γ, shape ``(..., m)``."""
    lam = np.asarray(lam, dtype=np.float64)
    match cone.kind:
        case ConeKind.gamma_k:
            return elementary_symmetric(lam, cone.order)[..., 1:]
        case ConeKind.half_space_gamma1:
            return np.sum(lam, axis=-1)[..., None]
        case ConeKind.custom:
            assert cone.name is not None
            return np.asarray(get_custom(cone.name).margin(lam))[..., None]


def in_cone(
    lam: FloatArray, cone: ConeSpec, *, closed: bool = False, boundary_tol: float = 0.0
) -> BoolArray:
    """Open membership λ ∈ Γ, or closed λ ∈ Γ̄ with a ``boundary_tol`` band."""
    margins = cone_margins(lam, cone)
    if closed:
        return np.all(margins >= -boundary_tol, axis=-1)
    return np.all(margins > 0.0, axis=-1)


def f_eval_batch(lam: FloatArray, spec: OperatorSpec) -> tuple[FloatArray, BoolArray]:
    """f(λ) along the last axis; NaN where λ ∉ Γ̄.  Returns (values, in_closed_cone)."""
    lam = np.asarray(lam, dtype=np.float64)
    inside = in_cone(lam, spec.cone, closed=True, boundary_tol=spec.boundary_tol)
    match spec.f_family:
        case FFamily.sigma_k_root:
            s = np.maximum(sigma_k(lam, spec.k), 0.0)
            values = s ** (1.0 / spec.k)
        case FFamily.sigma_k_raw:
            values = np.maximum(sigma_k(lam, spec.k), 0.0)
        case FFamily.custom:
            assert spec.custom_name is not None
            values = np.asarray(get_custom(spec.custom_name).f(lam), dtype=np.float64)
    return np.where(inside, values, np.nan), inside


def f_eval(lam: FloatArray, spec: OperatorSpec) -> float | OutsideClosedCone:
    values, inside = f_eval_batch(np.asarray(lam, dtype=np.float64), spec)
    if not bool(inside):
        return OUTSIDE_CLOSED_CONE
    return float(values)


def operator_of_matrix(
    m: SymMatrix, spec: OperatorSpec, tol: float = 1e-12
) -> float | OutsideClosedCone:
    """F(M) = f(λ(M))."""
    return f_eval(eigen_sym(m, tol).eigenvalues, spec)


def solve_diagonal_level(spec: OperatorSpec) -> float:
    """t* with f(t*, ..., t*) = level."""
    n, level = spec.n, spec.level
    match spec.f_family:
        case FFamily.sigma_k_root:
            return level / math.comb(n, spec.k) ** (1.0 / spec.k)
        case FFamily.sigma_k_raw:
            return (level / math.comb(n, spec.k)) ** (1.0 / spec.k)
        case FFamily.custom:
            pass

    def excess(t: float) -> float:
        value = f_eval(np.full(n, t), spec)
        if value is OUTSIDE_CLOSED_CONE:
            return -math.inf
        return value - level

    hi = 1.0
    while excess(hi) < 0:
        hi *= 2.0
        if hi > 1e12:
            raise NonConvergence("f(t,...,t) never reaches the level")
    lo = hi - 1.0
    while excess(lo) > 0:
        lo = lo - 2.0 * (hi - lo)
        if lo < -1e12:
            raise NonConvergence("f(t,...,t) stays above the level")
    # -inf below the cone edge still brackets
    return float(brentq(lambda t: max(excess(t), -1e300), lo, hi, xtol=1e-15, rtol=4e-16))


# ---------------------------------------------------------------------------
# Structural probes
# ---------------------------------------------------------------------------


def _box_sample(
    spec: OperatorSpec, box: tuple[float, float], rng: np.random.Generator, samples: int
) -> FloatArray:
    lam = rng.uniform(box[0], box[1], size=(samples, spec.n))
    return lam[in_cone(lam, spec.cone)]


def sample_strict_ellipticity(
    spec: OperatorSpec,
    box: tuple[float, float],
    rng: np.random.Generator,
    samples: int = 10_000,
    step: float = 1e-2,
) -> float:
    """Sampled inf of (f(λ+μ) - f(λ))/|μ| over λ in ``box ∩ Γ`` and small μ ∈ Γ̄_n."""
    lam = _box_sample(spec, box, rng, samples)
    mu = step * rng.uniform(0.0, 1.0, size=lam.shape)
    base, _ = f_eval_batch(lam, spec)
    moved, _ = f_eval_batch(lam + mu, spec)
    ratio = (moved - base) / np.linalg.norm(mu, axis=-1)
    return float(np.nanmin(ratio))


def sample_lipschitz(
    spec: OperatorSpec,
    box: tuple[float, float],
    rng: np.random.Generator,
    samples: int = 10_000,
    step: float = 1e-2,
) -> float:
    """Sampled sup of |f(λ') - f(λ)|/|λ' - λ| for nearby pairs inside Γ."""
    lam = _box_sample(spec, box, rng, samples)
    other = lam + step * rng.uniform(-1.0, 1.0, size=lam.shape)
    keep = in_cone(other, spec.cone)
    lam, other = lam[keep], other[keep]
    a, _ = f_eval_batch(lam, spec)
    b, _ = f_eval_batch(other, spec)
    ratio = np.abs(b - a) / np.linalg.norm(other - lam, axis=-1)
    logger.debug("Lipschitz probe over %d pairs", int(ratio.size))
    return float(np.nanmax(ratio))
