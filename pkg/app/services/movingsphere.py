"""Moving spheres: critical radius λ̄(x), asymptotic constant, Liouville classification.

Every entire-space statement is tested on one truncated ball B_R(0), with
sphere radii capped at R/5.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Any

import numpy as np

from app.errors import NoStartingRadius, NotASolution, OutOfDomain
from app.models.field import AnalyticField, Bubble
from app.models.grid import GridField
from app.models.matrix import FloatArray
from app.models.mobius_map import Dilate, MobiusMap
from app.schemas.experiment import Tolerances
from app.schemas.operator import OperatorSpec
from app.schemas.params import BubbleParams
from app.schemas.reports import (
    Aggregate,
    LiouvilleKind,
    LiouvilleVerdict,
    MovingSphereState,
)
from app.services.conformal import classify, grid_verdict_tol
from app.services.fields import field_value, interpolate
from app.services.mobius import pullback_field
from app.services.symfun import OUTSIDE_CLOSED_CONE, f_eval, solve_diagonal_level
from app.utils.logging import get_logger
from app.utils.rng import make_rng, uniform_ball, unit_directions

logger = get_logger(__name__)

FieldSource = AnalyticField | GridField

MAX_HALVINGS = 60
PROBE_ROUNDS = 8


def u_at(v: FieldSource, points: FloatArray, *, pole_guard: float = 1e-9) -> FloatArray:
    """u at arbitrary points; grid fields are interpolated multilinearly."""
    pts = np.asarray(points, dtype=np.float64)
    if isinstance(v, GridField):
        return interpolate(v.as_u(), pts)
    return field_value(v, pts, pole_guard=pole_guard)


def kelvin_value(
    v: FieldSource, x: FloatArray, lam: float, y: FloatArray, *, pole_guard: float = 1e-9
) -> FloatArray:
    """v_{x,λ}(y) = (λ/|y-x|)^{n-2} v(x + λ²(y-x)/|y-x|²), straight from the definition."""
    z = np.asarray(y, dtype=np.float64) - x
    r2 = np.sum(z * z, axis=-1)
    if np.any(r2 <= (pole_guard * lam) ** 2):
        raise OutOfDomain("Kelvin transform evaluated at its centre")
    image = x + (lam**2 / r2)[..., None] * z
    return (lam / np.sqrt(r2)) ** (v.n - 2) * u_at(v, image, pole_guard=pole_guard)


def default_directions(n: int, count: int = 64, seed: int = 0) -> FloatArray:
    return unit_directions(make_rng(seed), count, n)


def exterior_points(
    x: FloatArray, lam: float, R: float, directions: FloatArray, radii: int
) -> FloatArray:
    """Rays from x through B_R ∖ B_λ(x), geometric radii from λ out to R - |x|."""
    outer = R - float(np.linalg.norm(x))
    if outer <= lam:
        raise OutOfDomain(f"sphere radius {lam} leaves no room inside B_{R}")
    r = lam * np.geomspace(1.0, outer / lam, radii)
    return (x[None, None, :] + r[None, :, None] * directions[:, None, :]).reshape((-1, x.size))


def sphere_compare(
    v: FieldSource,
    x: FloatArray | tuple[float, ...],
    lam: float,
    region: FloatArray | None = None,
    *,
    R: float | None = None,
    directions: FloatArray | None = None,
    radii: int = 48,
    pole_guard: float = 1e-9,
) -> float:
    """Worst relative violation max (v_{x,λ} - v)/v over the exterior region.

    ≤ 0 means v_{x,λ} ≤ v holds there. Without an explicit ``region`` the
    rays of ``exterior_points`` inside B_R are used.
    """
    if lam <= 0:
        raise OutOfDomain("sphere radius must be positive")
    center = np.asarray(x, dtype=np.float64)
    if region is None:
        if R is None:
            raise OutOfDomain("sphere_compare needs a region or a ball radius R")
        dirs = default_directions(v.n) if directions is None else directions
        region = exterior_points(center, lam, R, dirs, radii)
    pts = np.asarray(region, dtype=np.float64).reshape((-1, v.n))
    base = u_at(v, pts, pole_guard=pole_guard)
    transformed = kelvin_value(v, center, lam, pts, pole_guard=pole_guard)
    return float(np.max((transformed - base) / base))


def critical_radius(
    v: FieldSource,
    x: FloatArray | tuple[float, ...],
    R: float,
    *,
    tol: float = 1e-5,
    compare_tol: float = 1e-10,
    directions: FloatArray | None = None,
    radii: int = 48,
    probes: int = 64,
    pole_guard: float = 1e-9,
) -> MovingSphereState:
    """λ̄(x) = sup{μ ≤ R/5 : v_{x,λ} ≤ v on B_R ∖ B_λ(x) for all λ < μ}.

    Starts from a verified-holding λ⁽⁰⁾ (halving from R/10), doubles to a
    failing radius or the cap, then bisects to relative ``tol``. A sweep of
    ``probes`` sub-radii below the result must hold; a failing probe lowers
    the bracket and the bisection is repeated.
    """
    center = np.asarray(x, dtype=np.float64)
    cap = R / 5.0
    if float(np.linalg.norm(center)) >= cap:
        raise OutOfDomain(f"sphere centre {center.tolist()} must satisfy |x| < R/5 = {cap}")
    dirs = default_directions(v.n) if directions is None else directions

    def violation(lam: float) -> float:
        return sphere_compare(
            v, center, lam, R=R, directions=dirs, radii=radii, pole_guard=pole_guard
        )

    def holds(lam: float) -> bool:
        return violation(lam) <= compare_tol

    lambda0 = R / 10.0
    for _ in range(MAX_HALVINGS):
        if holds(lambda0):
            break
        lambda0 /= 2.0
    else:
        raise NoStartingRadius(
            f"no holding sphere radius at x={center.tolist()} down to {lambda0:.3e}"
        )

    lo = lambda0
    hi: float | None = None
    while hi is None and lo < cap:
        trial = min(2.0 * lo, cap)
        if holds(trial):
            lo = trial
        else:
            hi = trial

    for _ in range(PROBE_ROUNDS):
        if hi is not None:
            while hi - lo > tol * lo:
                mid = 0.5 * (lo + hi)
                if holds(mid):
                    lo = mid
                else:
                    hi = mid
                logger.debug("critical radius bracket [%.10e, %.10e]", lo, hi)
        sweep = lo * (1.0 - tol) * np.arange(1, probes + 1) / probes
        failing = [p for p in sweep if not holds(float(p))]
        if not failing:
            break
        hi = float(failing[0])
        below = sweep[sweep < hi]
        lo = float(below[-1]) if below.size else hi / 2.0
        logger.warning("probe sub-radius %.6e failed; re-bracketing below it", hi)

    capped = hi is None
    gap = violation(lo) if capped else violation(min(lo * (1.0 + tol), cap))
    state = MovingSphereState(
        x=[float(c) for c in center],
        lambda0=lambda0,
        lambda_bar=lo,
        R=R,
        violation_gap=gap,
        capped=capped,
    )
    logger.info("Critical radius at %s: %.8e (capped=%s)", state.x, lo, capped)
    return state


def bubble_critical_radius(bubble: Bubble, x: FloatArray | tuple[float, ...]) -> float:
    """Closed form √(1 + b²|x - x0|²)/b, equal to (α/v(x))^{1/(n-2)}."""
    d = np.asarray(x, dtype=np.float64) - np.asarray(bubble.x0)
    return float(np.sqrt(1.0 + bubble.b**2 * np.sum(d * d)) / bubble.b)


def _shell(n: int, r: FloatArray, directions: FloatArray) -> FloatArray:
    return (r[:, None, None] * directions[None, :, :]).reshape((-1, n))


def asymptotic_alpha(
    v: FieldSource,
    R: float,
    *,
    directions: FloatArray | None = None,
    shells: int = 8,
    pole_guard: float = 1e-9,
) -> tuple[float, bool]:
    """min over |y| ∈ [0.8R, R] of |y|^{n-2} v(y), and whether it looks infinite.

    The infinite flag is raised when the direction-wise minimum at R is at
    least twice the one at R/2.
    """
    n = v.n
    dirs = default_directions(n) if directions is None else directions
    r = np.linspace(0.8 * R, R, shells)
    pts = _shell(n, r, dirs)
    weights = np.linalg.norm(pts, axis=1) ** (n - 2)
    alpha_hat = float(np.min(weights * u_at(v, pts, pole_guard=pole_guard)))

    def shell_min(radius: float) -> float:
        ring = radius * dirs
        return float(np.min(radius ** (n - 2) * u_at(v, ring, pole_guard=pole_guard)))

    growing = shell_min(R) >= 2.0 * shell_min(R / 2.0)
    logger.info("Asymptotic constant %.8e (infinite=%s)", alpha_hat, growing)
    return alpha_hat, growing


def lower_bound_measure(
    v: FieldSource,
    R: float,
    *,
    directions: FloatArray | None = None,
    radii: int = 48,
    pole_guard: float = 1e-9,
) -> float:
    """1/C_meas = min over B_R of (1 + |y|)^{n-2} v(y), sampled on rays from the origin."""
    n = v.n
    dirs = default_directions(n) if directions is None else directions
    pts = np.concatenate([np.zeros((1, n)), _shell(n, np.linspace(R / radii, R, radii), dirs)])
    weights = (1.0 + np.linalg.norm(pts, axis=1)) ** (n - 2)
    return float(np.min(weights * u_at(v, pts, pole_guard=pole_guard)))


def locate_maximum(
    v: FieldSource,
    R: float,
    *,
    directions: FloatArray | None = None,
    radii: int = 16,
    min_step_rel: float = 1e-10,
    pole_guard: float = 1e-9,
) -> FloatArray:
    """Compass search for the maximum of v inside B_{R/5}, started from the best coarse sample."""
    n = v.n
    dirs = default_directions(n) if directions is None else directions
    limit = R / 5.0
    coarse = np.concatenate(
        [np.zeros((1, n)), _shell(n, np.linspace(limit / radii, limit, radii), dirs)]
    )
    values = u_at(v, coarse, pole_guard=pole_guard)
    best = coarse[int(np.argmax(values))]
    best_value = float(np.max(values))
    moves = np.concatenate([np.eye(n), -np.eye(n)])
    step = limit / radii
    while step > min_step_rel * R:
        trial = best[None, :] + step * moves
        trial = trial[np.linalg.norm(trial, axis=1) <= limit]
        if trial.size:
            vals = u_at(v, trial, pole_guard=pole_guard)
            i = int(np.argmax(vals))
            if vals[i] > best_value:
                best, best_value = trial[i], float(vals[i])
                continue
        step /= 2.0
    return np.asarray(best)


def _bubble_log(theta: FloatArray, points: FloatArray, m: float) -> tuple[FloatArray, FloatArray]:
    """log bubble at ``points`` for θ = (log a, log b, x0) and its Jacobian in θ."""
    log_a, log_b = theta[0], theta[1]
    b2 = np.exp(2.0 * log_b)
    d = points - theta[2:]
    dist2 = np.sum(d * d, axis=1)
    q = 1.0 + b2 * dist2
    model = m * (log_a - np.log(q))
    jac = np.empty((points.shape[0], theta.size))
    jac[:, 0] = m
    jac[:, 1] = -m * 2.0 * b2 * dist2 / q
    jac[:, 2:] = (2.0 * m * b2 / q)[:, None] * d
    return model, jac


def fit_bubble(
    points: FloatArray,
    values: FloatArray,
    init: BubbleParams,
    *,
    tol: float = 1e-12,
    max_iter: int = 100,
) -> tuple[BubbleParams, float]:
    """Gauss-Newton with Armijo backtracking on Σ (log v - log bubble)² over (log a, log b, x0).

    Returns the fitted parameters and the largest absolute log residual.
    """
    pts = np.asarray(points, dtype=np.float64)
    n = pts.shape[1]
    m = (n - 2) / 2.0
    target = np.log(np.asarray(values, dtype=np.float64))
    theta = np.concatenate([[np.log(init.a), np.log(init.b)], np.asarray(init.x0, dtype=float)])

    def cost(th: FloatArray) -> tuple[float, FloatArray, FloatArray]:
        model, jac = _bubble_log(th, pts, m)
        r = model - target
        return 0.5 * float(r @ r), r, jac

    current, r, jac = cost(theta)
    for it in range(max_iter):
        step = np.linalg.lstsq(jac, -r, rcond=None)[0]
        slope = float((jac.T @ r) @ step)
        t = 1.0
        while t > 1e-12:
            candidate = theta + t * step
            trial, r_new, jac_new = cost(candidate)
            if trial <= current + 1e-4 * t * slope:
                break
            t /= 2.0
        else:
            break
        theta, current, r, jac = candidate, trial, r_new, jac_new
        logger.debug("bubble fit iteration %d: cost %.3e step %.3e", it, current, t)
        if np.linalg.norm(t * step) <= tol * (1.0 + np.linalg.norm(theta)):
            break
    params = BubbleParams(
        a=float(np.exp(theta[0])), b=float(np.exp(theta[1])), x0=tuple(float(c) for c in theta[2:])
    )
    return params, float(np.max(np.abs(r)))


def dilated(v: AnalyticField, r: float) -> AnalyticField:
    """v_r(y) = r^{(n-2)/2} v(ry); its critical radius is λ̄_v(rx)/r."""
    return pullback_field(v, MobiusMap(v.n, (Dilate(r),)))


def fit_centers(x_max: FloatArray, R: float) -> FloatArray:
    """The sampled maximum, a cross-polytope of radius R/20 around it, and one diagonal point."""
    n = x_max.size
    offset = R / 20.0
    cross = x_max[None, :] + offset * np.concatenate([np.eye(n), -np.eye(n)])
    diagonal = x_max + offset * np.ones(n) / np.sqrt(n)
    return np.concatenate([x_max[None, :], cross, diagonal[None, :]])


def _certify(
    v: FieldSource, R: float, spec: OperatorSpec, tols: Tolerances, rng: np.random.Generator
) -> None:
    if isinstance(v, GridField):
        result = classify(
            v,
            None,
            spec,
            grid_verdict_tol(v.grid, tols.verdict_grid_factor),
            jacobi_tol=tols.jacobi_tol,
        )
    else:
        points = uniform_ball(rng, tols.certification_samples, v.n, R)
        result = classify(
            v,
            points,
            spec,
            tols.verdict_tol_exact,
            jacobi_tol=tols.jacobi_tol,
            pole_guard=tols.pole_guard,
        )
    if result.aggregate is not Aggregate.solution:
        raise NotASolution(
            f"input is {result.aggregate.value}, not a solution on B_{R} "
            f"(max |F - level| = {result.max_abs_deviation:.3e})"
        )


def fit_tolerance(v: FieldSource, tols: Tolerances) -> float:
    """Bound on the bubble-fit residual and level gap; grids add their O(h²) sampling error."""
    if isinstance(v, GridField):
        return max(tols.fit_tol, grid_verdict_tol(v.grid, tols.verdict_grid_factor))
    return tols.fit_tol


def liouville_classify(
    v: FieldSource,
    R: float,
    spec: OperatorSpec,
    tols: Tolerances,
    *,
    rng: np.random.Generator,
    threads: int = 1,
) -> LiouvilleVerdict:
    """Constant, Bubble or Inconclusive for a certified solution sampled on B_R."""
    _certify(v, R, spec, tols, rng)
    n = v.n
    fit_tol = fit_tolerance(v, tols)
    dirs = default_directions(n, tols.sphere_directions)
    alpha_hat, infinite = asymptotic_alpha(v, R, directions=dirs, pole_guard=tols.pole_guard)
    lower = lower_bound_measure(v, R, directions=dirs, pole_guard=tols.pole_guard)
    base: dict[str, Any] = {
        "alpha": alpha_hat,
        "alpha_infinite": infinite,
        "lower_bound": lower,
    }

    sample = uniform_ball(rng, tols.certification_samples, n, R)
    sample_values = u_at(v, sample, pole_guard=tols.pole_guard)
    oscillation = float(np.ptp(sample_values))
    if infinite:
        if oscillation <= fit_tol * float(np.max(sample_values)):
            logger.info("Liouville verdict: Constant (oscillation %.3e)", oscillation)
            return LiouvilleVerdict(
                kind=LiouvilleKind.constant,
                residuals={"oscillation": oscillation},
                **base,
            )
        reason = f"asymptotic constant grows but the field oscillates by {oscillation:.3e}"
        logger.warning("Liouville verdict: Inconclusive (%s)", reason)
        return LiouvilleVerdict(kind=LiouvilleKind.inconclusive, reason=reason, **base)

    x_max = locate_maximum(v, R, directions=dirs, pole_guard=tols.pole_guard)
    centers = fit_centers(x_max, R)

    def radius_at(center: FloatArray) -> MovingSphereState:
        return critical_radius(
            v,
            center,
            R,
            tol=tols.radius_rel_tol,
            compare_tol=tols.sphere_compare_tol,
            directions=dirs,
            radii=tols.sphere_radii,
            probes=tols.sphere_probe_count,
            pole_guard=tols.pole_guard,
        )

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            states = list(pool.map(radius_at, centers))
    else:
        states = [radius_at(c) for c in centers]
    base["states"] = states

    center_values = u_at(v, centers, pole_guard=tols.pole_guard)
    lambdas = np.asarray([s.lambda_bar for s in states])
    errors = np.abs(lambdas ** (n - 2) * center_values - alpha_hat) / alpha_hat
    base["identity_errors"] = [float(e) for e in errors]
    if any(s.capped for s in states):
        reason = "critical radius reached the cap R/5 at a finite asymptotic constant"
        logger.warning("Liouville verdict: Inconclusive (%s)", reason)
        return LiouvilleVerdict(kind=LiouvilleKind.inconclusive, reason=reason, **base)
    if float(np.max(errors)) > tols.identity_rel_tol:
        reason = f"identity λ̄^(n-2) v = α off by {float(np.max(errors)):.3e} (relative)"
        logger.warning("Liouville verdict: Inconclusive (%s)", reason)
        return LiouvilleVerdict(kind=LiouvilleKind.inconclusive, reason=reason, **base)

    t_star = solve_diagonal_level(spec)
    b0 = 1.0 / float(lambdas[0])
    init = BubbleParams(a=b0 * float(np.sqrt(2.0 / t_star)), b=b0, x0=tuple(x_max.tolist()))
    ring = _shell(n, np.asarray([R / 40.0, R / 20.0, R / 10.0]), dirs[: 2 * n]) + x_max
    fit_points = np.concatenate([centers, ring])
    params, _ = fit_bubble(fit_points, u_at(v, fit_points, pole_guard=tols.pole_guard), init)

    fitted = Bubble(params.a, params.b, params.x0)
    residual = float(np.max(np.abs(np.log(sample_values) - np.log(field_value(fitted, sample)))))
    level_value = f_eval(np.full(n, fitted.eigenvalue), spec)
    level_gap = (
        float("inf") if level_value is OUTSIDE_CLOSED_CONE else abs(level_value - spec.level)
    )
    base["residuals"] = {"global_log_residual": residual, "level_gap": level_gap}
    if residual > fit_tol:
        reason = f"bubble fit residual {residual:.3e} exceeds {fit_tol:.1e}"
    elif level_gap > fit_tol:
        reason = f"fitted bubble misses the level condition by {level_gap:.3e}"
    else:
        logger.info("Liouville verdict: Bubble a=%.8e b=%.8e", params.a, params.b)
        return LiouvilleVerdict(kind=LiouvilleKind.bubble, params=params, **base)
    logger.warning("Liouville verdict: Inconclusive (%s)", reason)
    return LiouvilleVerdict(kind=LiouvilleKind.inconclusive, reason=reason, **base)

