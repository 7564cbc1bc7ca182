"""Casimir interaction of two parallel 2D lattices of 3D delta potentials.

Per-cell vacuum energy at zero temperature, Matsubara free energy at finite
temperature, low/high-temperature asymptotics, and independent brute-force
oracles (finite-lattice determinants, the two-center closed form, the
parallel-plate reference) for validation.  All quantities in lattice units
(a = 1).
"""

from .errors import (
    CaslatError,
    ConfigError,
    ConvergenceTooSlow,
    EwaldSingular,
    FitDegenerate,
    GammaPointSingular,
    NonPhysicalKernel,
    NonPositiveSeparation,
    PhiTildePole,
    QuadratureNotConverged,
    SingularPhi,
    WindowTooNarrow,
    ZeroCoupling,
)
from .model import (
    LatticeSystem,
    MomentumPoint,
    Tolerances,
    full_momentum,
    make_system,
    split_momentum,
)
from .lattice_sums import ScreenedSum, SumMethod, direct_sum, ewald_sum, phi_tilde
from .scattering import (
    KernelValue,
    axial_wavenumber,
    kernel_log_integrand,
    reflection_kernel,
)
from .spectral import (
    EnergyResult,
    LowTCoefficients,
    ThermalGrid,
    bz_integral,
    free_energy,
    high_T_asymptote,
    low_T_coefficients,
    vacuum_energy,
    zeta3,
    zeta_prime_zero,
)
from .oracle import (
    FiniteLatticeSpec,
    GreenMatrixSet,
    finite_lattice_energy,
    green_matrices,
    lifshitz_plates,
    matsubara_finite_lattice,
    two_center_energy,
)
from .heat_kernel import (
    HeatKernelTrace,
    TraceOrder,
    born0,
    born1,
    erfcx,
    exact_single_delta_trace,
    hk_coefficient_report,
    per_site_born1,
)

__version__ = "0.1.0"
