"""Exception types shared across the package."""


class EllPolesError(Exception):
    """Base class for all errors raised by ellpoles."""


class LatticeError(EllPolesError, ValueError):
    """Raised for degenerate half-periods (Im(omega'/omega) <= 0)."""


class PoleError(EllPolesError, ValueError):
    """An argument reduced to (within pole_tol of) a lattice point."""


class CollisionError(EllPolesError):
    """Two particles (or a particle and a shifted copy) coincide modulo the lattice."""


class DegeneracyError(EllPolesError):
    """A denominator of the form p(eta) - p(x_ij) or similar vanished."""


class ZeroVelocityError(EllPolesError, ValueError):
    """A velocity that must be inverted is zero."""


class NotOnCurveError(EllPolesError):
    """The supplied spectral parameter z does not lie on the spectral curve."""


class IllConditionedNodesError(EllPolesError):
    """Interpolation nodes give a Vandermonde matrix that is too ill-conditioned."""


class SingularSystemError(EllPolesError):
    """A linear system that must be solved is numerically singular."""


class ConvergenceError(EllPolesError):
    """Newton iteration did not converge."""


class BranchJumpError(ConvergenceError):
    """The logarithm branch changed during a Newton solve."""


class StepUnderflowError(EllPolesError):
    """The adaptive integrator step size fell below its floor."""
