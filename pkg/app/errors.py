"""Exception hierarchy for the toolkit.

Every failure a caller may want to react to has its own class.  Values that
belong to the mathematics (points outside the closed cone, FAIL verdicts)
are returned, never raised.
"""


class ToolkitError(Exception):
    """Base class; ``exit_code`` is what the CLI returns when it escapes."""

    exit_code = 2


class ConfigError(ToolkitError):
    """Experiment config could not be read or validated."""


class GridFormatError(ToolkitError):
    """Grid JSON header / CSV body pair is malformed."""


# ---------------------------------------------------------------------------
# symfun / conformal
# ---------------------------------------------------------------------------


class NonConvergence(ToolkitError):
    """Iteration cap exceeded before the stopping rule was met."""


class BadK(ToolkitError):
    """Elementary symmetric index outside 1..n."""


class NonPositiveU(ToolkitError):
    """Conformal Hessian requested for u <= 0."""


class EmptyRegion(ToolkitError):
    """Classification requested over no points."""


# ---------------------------------------------------------------------------
# fields / mobius
# ---------------------------------------------------------------------------


class OutOfDomain(ToolkitError):
    """Evaluation point outside the field's domain."""


class TooCloseToBoundary(OutOfDomain):
    """Finite-difference stencil leaves the grid under the Reject policy."""


class HitsPole(OutOfDomain):
    """Evaluation point is (numerically) an inversion centre."""


class DomainMismatch(ToolkitError):
    """Map and field dimensions do not compose."""


# ---------------------------------------------------------------------------
# viscosity / comparison / movingsphere
# ---------------------------------------------------------------------------


class DimensionTooHigh(ToolkitError):
    """Concave envelopes are only computed for n <= 3."""


class UnboundedHessian(ToolkitError):
    """Too many nodes exceed the C^{1,1} Hessian bound."""


class OrderViolation(ToolkitError):
    """psi1 <= psi2 fails beyond tolerance."""

    def __init__(self, message: str, *, node: object = None, gap: float = 0.0) -> None:
        super().__init__(message)
        self.node = node
        self.gap = gap


class BadParams(ToolkitError):
    """Deformation parameters violate their invariants."""


class BracketFailure(ToolkitError):
    """Bisection endpoints do not bracket the target."""


class NoStartingRadius(ToolkitError):
    """Even tiny spheres fail the moving-sphere comparison."""


class NotASolution(ToolkitError):
    """Liouville precondition failed: the input is not certified as a solution."""

    exit_code = 1
