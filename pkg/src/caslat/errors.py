"""Exception types shared across the package."""


class CaslatError(Exception):
    """Base class for all caslat errors."""


class ConfigError(CaslatError):
    """Invalid run configuration (CLI exit code 2)."""


class NonPositiveSeparation(CaslatError):
    """Sheet separation b must be strictly positive."""


class ZeroCoupling(CaslatError):
    """g = 0 is the trivial decoupled system and is rejected explicitly."""


class ConvergenceTooSlow(CaslatError):
    """Direct shell summation requested below its screening threshold."""


class EwaldSingular(CaslatError):
    """xi = 0 with q on the reciprocal lattice: the screened sum diverges."""


class PhiTildePole(CaslatError):
    """phi_tilde vanished within numerical resolution (single-lattice resonance)."""

    def __init__(self, message, xi=None, q=None):
        super().__init__(message)
        self.xi = xi
        self.q = q


class GammaPointSingular(CaslatError):
    """Kernel requested exactly at xi = 0, q = 0."""


class NonPhysicalKernel(CaslatError):
    """|h|^2 >= 1 at an interior point: breakdown regime of the log integrand."""

    def __init__(self, message, xi=None, q=None, h_abs2=None):
        super().__init__(message)
        self.xi = xi
        self.q = q
        self.h_abs2 = h_abs2


class QuadratureNotConverged(CaslatError):
    """An adaptive quadrature or summation failed to reach its tolerance."""


class SingularPhi(CaslatError):
    """Finite-lattice scattering matrix not invertible (resonance)."""


class WindowTooNarrow(CaslatError):
    """A fit window has too few points."""


class FitDegenerate(CaslatError):
    """A least-squares fit is unusable (residual far above propagated error)."""
