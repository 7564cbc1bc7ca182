"""Independent brute-force references for the periodic energy pipeline.

* finite N x N clusters of delta sites per sheet, evaluated through the
  determinant form ln det(1 - Phi_A^-1 G_AB Phi_B^-1 G_BA) with the
  renormalized diagonal Phi_nn = 1/g and the free Green's function
  G0(i xi; r) = exp(-xi r)/(4 pi r);
* the closed two-center (single site per sheet) reduction, which collapses
  to a dilogarithm;
* the parallel-plate reference with the bounded delta-sheet reflection
  coefficient r^2 = g^2/(2 Gamma - g)^2, whose weak-coupling form is
  r = g/(2 Gamma).

The finite-lattice xi quadrature reuses the spectral module's mapped
half-line rule (identical exp(-2 xi b) decay envelope).
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg, special

from .errors import NonPhysicalKernel, SingularPhi
from .model import Tolerances
from .spectral import EnergyResult, integrate_halfline, matsubara_sum


@dataclass(frozen=True)
class FiniteLatticeSpec:
    """n_side x n_side sites per sheet; sheet B at x3 = 0, sheet A at x3 = b
    displaced laterally by c."""

    n_side: int
    sys: object

    def __post_init__(self):
        if self.n_side < 1:
            raise ValueError("n_side must be >= 1")


@dataclass(frozen=True)
class GreenMatrixSet:
    """Scattering matrices of the finite cluster at one imaginary frequency."""

    Phi_A: np.ndarray
    Phi_B: np.ndarray
    G_AB: np.ndarray


def _sites(n_side):
    g = np.arange(n_side, dtype=float)
    x, y = np.meshgrid(g, g, indexing="ij")
    return np.stack([x.ravel(), y.ravel()], axis=1)


def _g0(xi, dist):
    return np.exp(-xi * dist) / (4.0 * math.pi * dist)


def green_matrices(spec, xi):
    """Phi_A = Phi_B (intra-sheet geometry is displacement independent) and
    G_AB between the sheets; all entries finite, diagonal exactly 1/g."""
    sys = spec.sys
    pos = _sites(spec.n_side)
    diff = pos[:, None, :] - pos[None, :, :]
    dist = np.sqrt((diff * diff).sum(axis=2))
    off = dist > 0.0
    phi = np.zeros_like(dist)
    phi[off] = -_g0(xi, dist[off])
    np.fill_diagonal(phi, 1.0 / sys.g_over_a)
    c = np.asarray(sys.c_over_a)
    diff_ab = pos[:, None, :] + c[None, None, :] - pos[None, :, :]
    dist_ab = np.sqrt((diff_ab * diff_ab).sum(axis=2) + sys.b_over_a ** 2)
    gab = _g0(xi, dist_ab)
    return GreenMatrixSet(Phi_A=phi, Phi_B=phi, G_AB=gab)


def round_trip_logdet(spec, xi):
    """ln det(1 - Phi_A^-1 G_AB Phi_B^-1 G_BA) at one frequency node."""
    mats = green_matrices(spec, xi)
    try:
        lu, piv = linalg.lu_factor(mats.Phi_A)
        x = linalg.lu_solve((lu, piv), mats.G_AB)
        y = linalg.lu_solve((lu, piv), mats.G_AB.T)
    except linalg.LinAlgError as exc:
        raise SingularPhi(f"Phi not invertible at xi = {xi}: {exc}") from exc
    m = x @ y
    sign, logdet = np.linalg.slogdet(np.eye(m.shape[0]) - m)
    if sign <= 0.0:
        raise SingularPhi(
            f"det(1 - M) not positive at xi = {xi}: round-trip resonance"
        )
    return float(logdet)


def finite_lattice_energy(spec, tol=None):
    """Interaction energy of the finite two-sheet cluster.

    The EnergyResult value is the per-cell energy E/n_side^2 (comparable to
    vacuum_energy); the total is reported in diagnostics["total_energy"].
    """
    if tol is None:
        tol = Tolerances()
    nodes = [0]

    def f(xi):
        nodes[0] += 1
        return round_trip_logdet(spec, xi)

    raw, qerr, _ = integrate_halfline(f, 1.0 / (2.0 * spec.sys.b_over_a), tol.quad_rel_tol)
    total = raw / (2.0 * math.pi)
    per_cell = total / spec.n_side ** 2
    return EnergyResult(
        value=per_cell,
        err_estimate=qerr / (2.0 * math.pi) / spec.n_side ** 2,
        diagnostics={"total_energy": total, "xi_evals": nodes[0]},
    )


def matsubara_finite_lattice(spec, Ta, tol=None):
    """Free energy of the finite cluster: Ta * sum'_{n>=0} ln det(...) at
    xi_n = 2 pi Ta n.  Per-cell value; total in diagnostics."""
    if tol is None:
        tol = Tolerances()
    Ta = float(Ta)
    if not (Ta > 0.0):
        raise ValueError(f"Ta must be > 0, got {Ta!r}")
    b = spec.sys.b_over_a

    def term(xi):
        if xi * b > 400.0:
            return 0.0, 0.0
        return round_trip_logdet(spec, xi), 0.0

    F, err, n_max, tail_bound, n0_term, _ = matsubara_sum(
        term, Ta, b, tol.matsubara_tail_tol
    )
    cells = spec.n_side ** 2
    return EnergyResult(
        value=F / cells,
        err_estimate=err / cells,
        diagnostics={
            "total_energy": F,
            "n_max": n_max,
            "tail_bound": tail_bound,
            "n0_term": n0_term / cells,
        },
    )


def two_center_energy(g, dist):
    """Closed form for one delta site per sheet at separation dist:

        (1/2 pi) int_0^inf ln(1 - (g e^{-xi d}/(4 pi d))^2) dxi
            = -Li2((g/(4 pi d))^2) / (4 pi d).

    (Substitute x = e^{-xi d}; scipy's spence is Li2(1-z).)
    """
    alpha2 = (g / (4.0 * math.pi * dist)) ** 2
    if alpha2 >= 1.0:
        raise NonPhysicalKernel(
            f"two-center round trip {alpha2:g} >= 1 at zero frequency", xi=0.0
        )
    return -float(special.spence(1.0 - alpha2)) / (4.0 * math.pi * dist)


def lifshitz_plates(sys, tol=None):
    """Parallel-plate reference energy per cell area (a = 1).

    Uses the bounded delta-sheet reflection coefficient
    r^2 = g^2/(2 Gamma - g)^2 (weak-coupling form g/(2 Gamma)); after the
    polar reduction the energy is

        E = (1/4 pi^2) int_0^inf kappa^2 ln(1 - r^2 e^{-2 kappa b}) dkappa.

    Raises NonPhysicalKernel when r^2 e^{-2 kappa b} >= 1 is met on the
    integration domain (resonant branch g > 0, strong coupling).
    """
    if tol is None:
        tol = Tolerances()
    g = sys.g_over_a
    b = sys.b_over_a

    def f(kappa):
        if kappa * b > 400.0:
            return 0.0
        den = 2.0 * kappa - g
        if den == 0.0:
            raise NonPhysicalKernel(
                f"sheet reflection coefficient singular at kappa = {kappa:g}",
                xi=kappa,
            )
        x = (g / den) ** 2 * math.exp(-2.0 * kappa * b)
        if x >= 1.0:
            raise NonPhysicalKernel(
                f"plate round trip {x:g} >= 1 at kappa = {kappa:g}", xi=kappa, h_abs2=x
            )
        return kappa * kappa * math.log1p(-x)

    raw, qerr, nodes = integrate_halfline(f, 1.0 / (2.0 * b), tol.quad_rel_tol)
    return EnergyResult(
        value=raw / (4.0 * math.pi ** 2),
        err_estimate=qerr / (4.0 * math.pi ** 2),
        diagnostics={"xi_evals": nodes},
    )
