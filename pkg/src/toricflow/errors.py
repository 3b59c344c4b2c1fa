"""Exception hierarchy for toricflow.

Every failure mode of the numerical pipeline maps to a dedicated class so
callers (and the CLI exit-code logic) can react to the specific check that
failed rather than parsing messages.
"""


class ToricFlowError(Exception):
    """Base class for all toricflow errors."""


# ---------------------------------------------------------------- polytope --

class PolytopeError(ToricFlowError):
    pass


class NotFullDimensional(PolytopeError):
    """Input vertices do not span the ambient dimension."""


class OriginNotInterior(PolytopeError):
    """The origin is not strictly inside the polytope."""


class DelzantViolation(PolytopeError):
    """A vertex cone is not unimodular (or not simple)."""

    def __init__(self, vertex, detail=""):
        self.vertex = tuple(vertex)
        super().__init__(f"Delzant condition fails at vertex {self.vertex}: {detail}")


class NonReflexive(PolytopeError):
    """Facet heights or vertices are not integral (polytope is not reflexive)."""


# -------------------------------------------------------------- potentials --

class BoundaryPoint(ToricFlowError):
    """Evaluation point is on or outside the polytope boundary."""


class NonConvexInput(ToricFlowError):
    """A grid potential fails the discrete convexity requirement."""


class NonPositiveDefinite(ToricFlowError):
    """A difference Hessian is not positive definite (convexity lost locally)."""


# ----------------------------------------------------------------- weights --

class WeightError(ToricFlowError):
    pass


class OutsidePolytope(WeightError):
    """Moment argument lies outside the closed polytope."""


class NonPositiveFactor(WeightError):
    """An affine weight factor is non-positive at the evaluation point."""


class FanoViolation(WeightError):
    """A weight factor is non-positive at a polytope vertex."""

    def __init__(self, vertex, factor_index, value):
        self.vertex = tuple(vertex)
        self.factor_index = int(factor_index)
        self.value = float(value)
        super().__init__(
            f"weight factor {self.factor_index} is {self.value:.6g} <= 0 "
            f"at vertex {self.vertex}; the bundle is not Fano"
        )


# -------------------------------------------------------------- quadrature --

class QuadratureUnstable(ToricFlowError):
    """Polytope quadrature did not stabilize under refinement."""


class QuadratureUnderflow(ToricFlowError):
    """Grid quadrature captures too little of the conserved weighted volume."""


# -------------------------------------------------------------------- flow --

class NewtonDivergence(ToricFlowError):
    """Damped Newton failed to reach tolerance (suggests a smaller dt)."""


class ConvexityLoss(ToricFlowError):
    """An accepted step produced a non-convex potential."""


class MinimizerOnBoundary(ToricFlowError):
    """The potential minimizer sits on the grid boundary (box too small)."""


class MaxStepsExceeded(ToricFlowError):
    """Flow hit the step budget before reaching stationarity."""

    def __init__(self, message, result=None):
        self.result = result
        super().__init__(message)


# ----------------------------------------------------------------- soliton --

class GaugeInconsistency(ToricFlowError):
    """The stationary gauge constant kept drifting between Newton sweeps."""


# ------------------------------------------------------------------ config --

class SchemaError(ToricFlowError):
    """Run configuration violates the JSON schema."""

    def __init__(self, message, json_pointer=""):
        self.json_pointer = json_pointer
        super().__init__(f"{message} (at '{json_pointer}')" if json_pointer else message)
