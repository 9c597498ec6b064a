"""Generators of the Möbius group of R^n ∪ {∞} and their composition.

Each generator knows its value, Jacobian matrix, second derivatives and the
conformal weight |J|^{(n-2)/(2n)} together with the weight's own jet.  All
methods broadcast over leading batch axes of ``x`` (shape ``(..., n)``).
"""

from dataclasses import dataclass, field

import numpy as np

from app.models.jet import Jet2
from app.models.matrix import FloatArray


@dataclass(frozen=True)
class Translate:
    vector: tuple[float, ...]

    def apply(self, x: FloatArray) -> FloatArray:
        return x + np.asarray(self.vector)

    def jacobian(self, x: FloatArray) -> FloatArray:
        n = x.shape[-1]
        return np.broadcast_to(np.eye(n), x.shape + (n,)).copy()

    def second(self, x: FloatArray) -> FloatArray:
        n = x.shape[-1]
        return np.zeros(x.shape + (n, n))

    def jacobian_det(self, x: FloatArray) -> FloatArray:
        return np.ones(x.shape[:-1])

    def weight(self, x: FloatArray) -> Jet2:
        n = x.shape[-1]
        batch = x.shape[:-1]
        return Jet2(np.ones(batch), np.zeros(batch + (n,)), np.zeros(batch + (n, n)))

    def poles(self) -> list[FloatArray]:
        return []


@dataclass(frozen=True)
class Dilate:
    r: float

    def __post_init__(self) -> None:
        if self.r <= 0:
            raise ValueError("dilation factor must be positive")

    def apply(self, x: FloatArray) -> FloatArray:
        return self.r * x

    def jacobian(self, x: FloatArray) -> FloatArray:
        n = x.shape[-1]
        return np.broadcast_to(self.r * np.eye(n), x.shape + (n,)).copy()

    def second(self, x: FloatArray) -> FloatArray:
        n = x.shape[-1]
        return np.zeros(x.shape + (n, n))

    def jacobian_det(self, x: FloatArray) -> FloatArray:
        n = x.shape[-1]
        return np.full(x.shape[:-1], self.r**n)

    def weight(self, x: FloatArray) -> Jet2:
        n = x.shape[-1]
        batch = x.shape[:-1]
        return Jet2(
            np.full(batch, self.r ** ((n - 2) / 2)),
            np.zeros(batch + (n,)),
            np.zeros(batch + (n, n)),
        )

    def poles(self) -> list[FloatArray]:
        return []


@dataclass(frozen=True)
class Invert:
    """Unit-radius inversion x ↦ c + (x - c)/|x - c|^2."""

    center: tuple[float, ...]

    def _z(self, x: FloatArray) -> tuple[FloatArray, FloatArray]:
        z = x - np.asarray(self.center)
        rho = np.sum(z * z, axis=-1)
        return z, rho

    def apply(self, x: FloatArray) -> FloatArray:
        z, rho = self._z(x)
        return np.asarray(self.center) + z / rho[..., None]

    def jacobian(self, x: FloatArray) -> FloatArray:
        z, rho = self._z(x)
        n = x.shape[-1]
        zz = z[..., :, None] * z[..., None, :]
        return (np.eye(n) - 2.0 * zz / rho[..., None, None]) / rho[..., None, None]

    def second(self, x: FloatArray) -> FloatArray:
        # D2[l, j, k] = d_j d_k (z_l / rho)
        z, rho = self._z(x)
        n = x.shape[-1]
        eye = np.eye(n)
        r2 = rho[..., None, None, None] ** 2
        r3 = rho[..., None, None, None] ** 3
        zl = z[..., :, None, None]
        zj = z[..., None, :, None]
        zk = z[..., None, None, :]
        d_lk = eye[:, None, :]
        d_lj = eye[:, :, None]
        d_jk = eye[None, :, :]
        return (
            -2.0 * (d_lk * zj + d_lj * zk + d_jk * zl) / r2
            + 8.0 * zl * zj * zk / r3
        )

    def jacobian_det(self, x: FloatArray) -> FloatArray:
        _, rho = self._z(x)
        n = x.shape[-1]
        return rho ** (-n)

    def weight(self, x: FloatArray) -> Jet2:
        # |x - c|^{-(n-2)}
        z, rho = self._z(x)
        n = x.shape[-1]
        r = np.sqrt(rho)
        value = r ** (-(n - 2))
        grad = -(n - 2) * r[..., None] ** (-n) * z
        zz = z[..., :, None] * z[..., None, :]
        hess = -(n - 2) * r[..., None, None] ** (-n) * (
            np.eye(n) - n * zz / rho[..., None, None]
        )
        return Jet2(value, grad, hess)

    def poles(self) -> list[FloatArray]:
        return [np.asarray(self.center)]


MobiusOp = Translate | Dilate | Invert


@dataclass(frozen=True)
class MobiusMap:
    """Ops applied left to right: ``ops[0]`` acts first.  Empty = identity."""

    n: int
    ops: tuple[MobiusOp, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        for op in self.ops:
            if isinstance(op, Translate | Invert):
                size = len(op.vector) if isinstance(op, Translate) else len(op.center)
                if size != self.n:
                    raise ValueError(f"op {op!r} does not live in dimension {self.n}")

    def then(self, other: "MobiusMap") -> "MobiusMap":
        """Composition: self first, then other."""
        return MobiusMap(self.n, self.ops + other.ops)

    @classmethod
    def identity(cls, n: int) -> "MobiusMap":
        return cls(n)

    @classmethod
    def kelvin(cls, center: tuple[float, ...], lam: float) -> "MobiusMap":
        """y ↦ x + λ²(y - x)/|y - x|² as translations, dilations and a unit inversion."""
        n = len(center)
        neg = tuple(-c for c in center)
        return cls(
            n,
            (
                Translate(neg),
                Dilate(1.0 / lam),
                Invert((0.0,) * n),
                Dilate(lam),
                Translate(tuple(center)),
            ),
        )


def chain_jet(
    weight: Jet2, jacobian: FloatArray, second: FloatArray, image: Jet2
) -> Jet2:
    """Jet of ``x ↦ s(x) * g(T(x))`` from the jet of s, DT, D²T and the jet of g at T(x).

    ``jacobian[..., l, j] = ∂_j T_l`` and ``second[..., l, j, k] = ∂_j ∂_k T_l``.
    """
    s, ds, d2s = weight.value, weight.gradient, weight.hessian
    g, dg, d2g = image.value, image.gradient, image.hessian
    pulled = np.einsum("...lj,...l->...j", jacobian, dg)
    value = s * g
    gradient = ds * g[..., None] + s[..., None] * pulled
    cross = ds[..., :, None] * pulled[..., None, :]
    inner = np.einsum("...lj,...lm,...mk->...jk", jacobian, d2g, jacobian)
    curvature = np.einsum("...l,...ljk->...jk", dg, second)
    hessian = (
        d2s * g[..., None, None]
        + cross
        + np.swapaxes(cross, -1, -2)
        + s[..., None, None] * (inner + curvature)
    )
    return Jet2(value, gradient, hessian)


def pull_jet(op: MobiusOp, x: FloatArray, image: Jet2) -> Jet2:
    """One-generator weighted pullback: jet of |J_op|^{(n-2)/(2n)} w∘op at x."""
    return chain_jet(op.weight(x), op.jacobian(x), op.second(x), image)


@dataclass(frozen=True)
class KelvinTransform:
    """w ↦ w_{x,λ}, the weighted reflection through the sphere ∂B_λ(x)."""

    x: tuple[float, ...]
    lam: float

    def __post_init__(self) -> None:
        if self.lam <= 0:
            raise ValueError("Kelvin radius must be positive")

    def as_map(self) -> MobiusMap:
        return MobiusMap.kelvin(self.x, self.lam)
