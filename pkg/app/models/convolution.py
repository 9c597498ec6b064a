"""Results of quadratic-penalty regularisation and concave envelopes."""

import enum
from dataclasses import dataclass

from app.models.grid import GridField
from app.models.matrix import FloatArray


class ConvolutionKind(enum.StrEnum):
    sup = "Sup"
    inf = "Inf"


@dataclass(frozen=True)
class ConvolutionResult:
    """ψ̂ on the grid of the input; ``argopt`` holds x* (Sup) or x_* (Inf) per node.

    ``argopt`` has shape ``grid.shape + (n,)`` in physical coordinates and
    ``argopt_index`` the matching node indices.
    """

    regularized: GridField
    eps: float
    argopt: FloatArray
    argopt_index: FloatArray
    kind: ConvolutionKind


@dataclass(frozen=True)
class EnvelopeResult:
    envelope: GridField
    contact_nodes: list[tuple[int, ...]]
    contact_tol: float
