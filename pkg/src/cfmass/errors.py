"""Exception hierarchy shared by all subpackages."""


class CFMassError(Exception):
    """Base class for every error raised by cfmass."""


class InvalidSurfaceError(CFMassError, ValueError):
    """Degenerate or malformed surface data (zero-area elements, bad parameters)."""


class MeshTopologyError(InvalidSurfaceError):
    """Open, non-manifold, or non-spherical mesh component."""


class ObjParseError(InvalidSurfaceError):
    """Malformed OBJ input."""


class OrientationError(InvalidSurfaceError):
    """Inconsistent or inward orientation (negative enclosed volume)."""


class MeanConvexityError(CFMassError, ValueError):
    """H0 <= 0 somewhere on a surface that must be mean-convex."""


class UnsupportedSurfaceError(CFMassError, ValueError):
    """Operation not defined for this surface kind (e.g. non-convex offsets)."""


class SolverError(CFMassError, RuntimeError):
    """Linear solve failed, was ill-conditioned, or did not converge."""

    def __init__(self, message, *, condition=None, residual=None):
        super().__init__(message)
        self.condition = condition
        self.residual = residual


class DomainError(CFMassError, ValueError):
    """Evaluation point or surface/factor pairing outside the valid domain."""


class NonAsymptoticallyFlatError(CFMassError, ValueError):
    """Mass expansion limit does not converge."""


class ConstructionError(CFMassError, ValueError):
    """A conformal factor could not be built with the required properties."""


class QuadratureError(CFMassError, RuntimeError):
    """Quadrature failed to reach the requested tolerance."""


class FlowBreakdownError(CFMassError, RuntimeError):
    """Smooth inverse mean curvature flow cannot be continued."""

    def __init__(self, message, *, t=None, trace=None):
        super().__init__(message)
        self.t = t
        self.trace = trace


class InvalidTraceError(CFMassError, ValueError):
    """Flow trace unusable for the requested computation."""


class ConfigError(CFMassError, ValueError):
    """Experiment configuration failed validation."""

    def __init__(self, message, keys=()):
        super().__init__(message)
        self.keys = list(keys)
