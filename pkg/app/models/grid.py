"""Uniform grids and sampled fields on them."""

import enum
import itertools
from dataclasses import dataclass

import numpy as np

from app.models.matrix import FloatArray

MIN_NODES_PER_AXIS = 5
STENCIL_MARGIN = 2


class BoundaryPolicy(enum.StrEnum):
    clip = "clip"
    reflect = "reflect"
    reject = "reject"


class FieldKind(enum.StrEnum):
    """What the stored values are: u itself (positive) or ψ = -ln u."""

    u = "u"
    psi = "psi"


@dataclass(frozen=True)
class GridSpec:
    """Axis-aligned uniform grid: node i sits at ``origin + i * spacing``."""

    origin: tuple[float, ...]
    spacing: tuple[float, ...]
    shape: tuple[int, ...]

    def __post_init__(self) -> None:
        if not (len(self.origin) == len(self.spacing) == len(self.shape)):
            raise ValueError("origin, spacing and shape must have the same length")
        if any(h <= 0 for h in self.spacing):
            raise ValueError("grid spacing must be positive on every axis")
        if any(m < MIN_NODES_PER_AXIS for m in self.shape):
            raise ValueError(f"grids need at least {MIN_NODES_PER_AXIS} nodes per axis")

    @classmethod
    def box(cls, lower: tuple[float, ...], upper: tuple[float, ...], nodes: int) -> "GridSpec":
        """Grid with ``nodes`` nodes per axis spanning [lower, upper]."""
        spacing = tuple((hi - lo) / (nodes - 1) for lo, hi in zip(lower, upper, strict=True))
        return cls(tuple(float(v) for v in lower), spacing, (nodes,) * len(lower))

    @property
    def n(self) -> int:
        return len(self.shape)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def h(self) -> float:
        """Largest spacing (used for O(h^2) tolerance heuristics)."""
        return max(self.spacing)

    def axis(self, i: int) -> FloatArray:
        return self.origin[i] + self.spacing[i] * np.arange(self.shape[i], dtype=np.float64)

    def coordinates(self) -> FloatArray:
        """Node coordinates, shape ``shape + (n,)``."""
        mesh = np.meshgrid(*(self.axis(i) for i in range(self.n)), indexing="ij")
        return np.stack(mesh, axis=-1)

    def point(self, node: tuple[int, ...]) -> FloatArray:
        return np.asarray(self.origin) + np.asarray(self.spacing) * np.asarray(node)

    def interior_nodes(self, margin: int = STENCIL_MARGIN) -> list[tuple[int, ...]]:
        ranges = [range(margin, m - margin) for m in self.shape]
        return list(itertools.product(*ranges))

    def interior_slices(self, margin: int = STENCIL_MARGIN) -> tuple[slice, ...]:
        return tuple(slice(margin, m - margin) for m in self.shape)

    def refined(self) -> "GridSpec":
        """Same box with half the spacing."""
        return GridSpec(
            self.origin,
            tuple(h / 2 for h in self.spacing),
            tuple(2 * m - 1 for m in self.shape),
        )


@dataclass(frozen=True)
class GridField:
    """Sampled values on a grid; u-kind values are strictly positive."""

    grid: GridSpec
    values: FloatArray
    kind: FieldKind = FieldKind.u
    boundary_policy: BoundaryPolicy = BoundaryPolicy.reject

    def __post_init__(self) -> None:
        vals = np.asarray(self.values, dtype=np.float64).reshape(self.grid.shape)
        if not np.all(np.isfinite(vals)):
            raise ValueError("grid values must be finite")
        if self.kind is FieldKind.u and not np.all(vals > 0):
            raise ValueError("u-kind grid values must be strictly positive")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def n(self) -> int:
        return self.grid.n

    @property
    def positivity_floor(self) -> float:
        return float(self.values.min())

    def with_values(self, values: FloatArray, kind: FieldKind | None = None) -> "GridField":
        return GridField(self.grid, values, kind or self.kind, self.boundary_policy)

    def as_psi(self) -> "GridField":
        """ψ = -ln u on the same grid."""
        if self.kind is FieldKind.psi:
            return self
        return self.with_values(-np.log(self.values), FieldKind.psi)

    def as_u(self) -> "GridField":
        if self.kind is FieldKind.u:
            return self
        return self.with_values(np.exp(-self.values), FieldKind.u)
