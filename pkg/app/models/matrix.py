"""Symmetric matrices and their spectra (single or batched)."""

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

FloatArray = NDArray[np.float64]


@dataclass(frozen=True)
class SymMatrix:
    """An exactly symmetric n x n matrix, or a stack of them (shape ``(..., n, n)``).

    The upper triangle is authoritative: construction mirrors it into the
    lower triangle, so ``entries[..., i, j] == entries[..., j, i]`` bit for bit.
    """

    entries: FloatArray

    @classmethod
    def from_array(cls, a: FloatArray | list[list[float]]) -> "SymMatrix":
        arr = np.asarray(a, dtype=np.float64)
        if arr.ndim < 2 or arr.shape[-1] != arr.shape[-2] or arr.shape[-1] < 1:
            raise ValueError(f"expected (..., n, n) with n >= 1, got shape {arr.shape}")
        upper = np.triu(arr)
        strict = np.triu(arr, 1)
        sym = upper + np.swapaxes(strict, -1, -2)
        sym.setflags(write=False)
        return cls(sym)

    @classmethod
    def identity(cls, n: int) -> "SymMatrix":
        return cls.from_array(np.eye(n))

    @property
    def n(self) -> int:
        return int(self.entries.shape[-1])

    @property
    def batch_shape(self) -> tuple[int, ...]:
        return tuple(self.entries.shape[:-2])

    def trace(self) -> FloatArray:
        return np.trace(self.entries, axis1=-2, axis2=-1)

    def frobenius(self) -> FloatArray:
        return np.sqrt(np.sum(self.entries**2, axis=(-2, -1)))


@dataclass(frozen=True)
class Spectrum:
    """Ascending eigenvalues with eigenvectors (columns) and the worst residual.

    ``residual`` is max |Mv - λv| over all computed pairs, relative to
    max(1, ‖M‖_F).
    """

    eigenvalues: FloatArray
    eigenvectors: FloatArray
    residual: float
    sweeps: int

    @property
    def min_eigenvalue(self) -> FloatArray:
        return self.eigenvalues[..., 0]

    @property
    def max_eigenvalue(self) -> FloatArray:
        return self.eigenvalues[..., -1]
