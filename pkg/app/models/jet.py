"""Second-order jets (value, gradient, Hessian) of scalar fields."""

from dataclasses import dataclass

import numpy as np

from app.models.matrix import FloatArray, Spectrum, SymMatrix


@dataclass(frozen=True)
class Jet2:
    """J₂ of a scalar field at one point or a batch of points.

    Shapes: ``value`` (...), ``gradient`` (..., n), ``hessian`` (..., n, n).
    The Hessian is symmetrised on construction.
    """

    value: FloatArray
    gradient: FloatArray
    hessian: FloatArray

    def __post_init__(self) -> None:
        h = np.asarray(self.hessian, dtype=np.float64)
        upper = np.triu(h)
        sym = upper + np.swapaxes(np.triu(h, 1), -1, -2)
        object.__setattr__(self, "value", np.asarray(self.value, dtype=np.float64))
        object.__setattr__(self, "gradient", np.asarray(self.gradient, dtype=np.float64))
        object.__setattr__(self, "hessian", sym)

    @property
    def n(self) -> int:
        return int(self.gradient.shape[-1])

    def take(self, index: int) -> "Jet2":
        """Single jet out of a batch."""
        return Jet2(self.value[index], self.gradient[index], self.hessian[index])

    def shifted_hessian(self, delta: FloatArray | float) -> "Jet2":
        """Same jet with ``delta * I`` added to the Hessian."""
        eye = np.eye(self.n)
        d = np.asarray(delta, dtype=np.float64)[..., None, None]
        return Jet2(self.value, self.gradient, self.hessian + d * eye)

    @classmethod
    def constant(cls, value: float, n: int) -> "Jet2":
        return cls(np.float64(value), np.zeros(n), np.zeros((n, n)))


@dataclass(frozen=True)
class ConformalJet:
    """A^u at a point (or batch), its spectrum and the u-jet it came from."""

    a: SymMatrix
    spectrum: Spectrum
    u_jet: Jet2

    @property
    def eigenvalues(self) -> FloatArray:
        return self.spectrum.eigenvalues
