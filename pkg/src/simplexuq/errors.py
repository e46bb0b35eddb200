"""Exception types shared across the package."""


class SimplexUQError(Exception):
    """Base class for all package-specific errors."""


class DegeneratePoint(SimplexUQError):
    """A new point coincides with an existing one (within tolerance)."""


class DegenerateSimplex(SimplexUQError):
    """A simplex has (numerically) zero volume."""


class PredicateFailure(SimplexUQError):
    """A geometric predicate stayed ambiguous after perturbation handling."""


class PointLocationFailure(SimplexUQError):
    """No simplex containing the query point could be identified."""


class InsufficientPoints(SimplexUQError):
    """Too few candidate points to build an interpolation stencil."""


class SingularSystem(SimplexUQError):
    """The Vandermonde system is singular or too ill-conditioned to trust."""


class MoreThanTwoRegions(SimplexUQError):
    """Simplex vertices carry three or more distinct region labels."""


class BudgetExhausted(SimplexUQError):
    """The oracle evaluation budget does not allow another refinement."""


class PlacementFailure(SimplexUQError):
    """No acceptable new sample point was found inside a simplex."""


class InvalidNetworkFile(SimplexUQError):
    """A network description file does not follow the documented format."""


class InfeasibleNetwork(SimplexUQError):
    """The network equations require a negative squared pressure."""


class SolveFailure(SimplexUQError):
    """Newton iteration on the network equations did not converge."""


class InvalidModelFile(SimplexUQError):
    """A saved model file is missing its magic line or is malformed."""
