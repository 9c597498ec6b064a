"""Seeded sampling helpers.

Every sampled point set goes through a ``numpy.random.Generator`` backed by
PCG64 so that a seed reproduces the same points on every platform.
"""

import numpy as np

from app.models.matrix import FloatArray
from app.models.mobius_map import Dilate, Invert, MobiusMap, MobiusOp, Translate


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def unit_directions(rng: np.random.Generator, count: int, n: int) -> FloatArray:
    """The 2n axis directions followed by ``count - 2n`` random unit vectors."""
    axes = np.concatenate([np.eye(n), -np.eye(n)])
    extra = max(count - 2 * n, 0)
    random = rng.standard_normal((extra, n))
    random /= np.linalg.norm(random, axis=1, keepdims=True)
    return np.concatenate([axes, random])[: max(count, 2 * n)]


def uniform_ball(
    rng: np.random.Generator, count: int, n: int, radius: float, center: FloatArray | None = None
) -> FloatArray:
    directions = rng.standard_normal((count, n))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    radii = radius * rng.uniform(0.0, 1.0, count) ** (1.0 / n)
    points = directions * radii[:, None]
    return points if center is None else points + center


def random_mobius(rng: np.random.Generator, n: int, ops: int) -> MobiusMap:
    """Cycles Translate, Dilate, Invert with moderate parameters."""
    chosen: list[MobiusOp] = []
    for i in range(ops):
        match i % 3:
            case 0:
                chosen.append(Translate(tuple(rng.uniform(-1.0, 1.0, n).tolist())))
            case 1:
                chosen.append(Dilate(float(rng.uniform(0.5, 2.0))))
            case _:
                center = rng.standard_normal(n)
                center *= rng.uniform(2.0, 3.0) / np.linalg.norm(center)
                chosen.append(Invert(tuple(center.tolist())))
    return MobiusMap(n, tuple(chosen))


def random_orthogonal(rng: np.random.Generator, n: int) -> FloatArray:
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.sign(np.diag(r))
