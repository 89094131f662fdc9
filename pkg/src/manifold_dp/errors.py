"""Exception hierarchy for manifold_dp."""


class ManifoldError(ValueError):
    """Base class for all library errors."""


class InvariantViolation(ManifoldError):
    """A point or tangent vector does not satisfy its manifold constraints."""


class FootpointMismatch(ManifoldError):
    """Two tangent vectors live in different tangent spaces."""


class LogUndefined(ManifoldError):
    """The inverse exponential map is undefined (cut locus reached)."""


class DomainError(ManifoldError):
    """An argument lies outside the domain of a formula."""


class AssumptionViolation(ManifoldError):
    """The data radius is too large for the curvature bound."""


class UnsupportedDimension(ManifoldError):
    """Operation only implemented for a specific dimension or manifold."""


class SamplerStuck(RuntimeError):
    """Rejection sampler exhausted its attempt budget."""


class MixingFailure(RuntimeError):
    """Metropolis-Hastings acceptance rate collapsed."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
