"""Exception types shared across the package."""


class MagdiracError(Exception):
    """Base class for all package errors."""


class LatticeError(MagdiracError):
    """Invalid lattice geometry or resolution."""


class ConfigError(MagdiracError):
    """Malformed run configuration."""


class OffManifoldError(MagdiracError):
    """A map value violates the on-manifold tolerance."""


class UnsupportedOperationError(MagdiracError):
    """Operation not available on this lattice/target combination."""


class MagneticPrimitiveError(MagdiracError):
    """A two-form primitive was requested but the magnetic data has none."""


class EigenSolveError(MagdiracError):
    """Spinor eigensolve failed to converge."""


class FlowStepError(MagdiracError):
    """Gradient-flow step size underflowed while backtracking."""
