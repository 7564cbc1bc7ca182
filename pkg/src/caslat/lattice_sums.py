"""Screened square-lattice sums at imaginary frequency.

The central object is

    S(xi, q) = sum_{n in Z^2, n != 0} exp(-xi |n|) cos(q . n) / |n|,

the primed lattice sum of the single-sheet scattering function continued to
the imaginary frequency axis (a = 1).  The sine part cancels pairwise under
n -> -n, so only cosines are ever summed and the result is real by
construction.

Two routes are provided:

* ``direct_sum`` -- shell-by-shell summation with a rigorous exponential
  tail bound; requires xi >= XI_MIN_DIRECT.

* ``ewald_sum`` -- a Gaussian split valid down to xi = 0, based on

      exp(-xi r)/r = (2/sqrt(pi)) int_0^inf exp(-r^2 t^2 - xi^2/(4 t^2)) dt.

  Cutting the integral at t = eta gives a short-range lattice part screened
  super-algebraically by exp(-eta^2 r^2), plus a smooth long-range part that
  is resummed over reciprocal images p = q + 2*pi*N using the 2D transform
  of exp(-xi r)/r, which is 2*pi/sqrt(xi^2 + p^2), smeared by erfc.  The
  n = 0 contribution of the smooth part is removed in closed form
  (the "self term" below).

The production path for phi_tilde uses the Ewald route at every xi; the
direct route is the public cross-validation method.
"""

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy import special

from .errors import ConvergenceTooSlow, EwaldSingular
from .model import TWO_PI

XI_MIN_DIRECT = 0.5
DEFAULT_ETA = math.sqrt(math.pi)
DEFAULT_SUM_TOL = 1e-12

# number of lattice points with |n| in [m, m+1) is at most pi*(1+sqrt(2))*(2m+1)
_SHELL_COUNT = math.pi * (1.0 + math.sqrt(2.0))


class SumMethod(Enum):
    DIRECT = "direct"
    EWALD = "ewald"


@dataclass(frozen=True)
class ScreenedSum:
    value: float
    err_estimate: float
    method: SumMethod


_shell_cache = {}


def _lattice_shells(rmax):
    """Nonzero integer vectors with |n| <= rmax, sorted by (|n|^2, n1, n2)."""
    m = int(math.ceil(rmax))
    key = (m, round(rmax, 12))
    cached = _shell_cache.get(key)
    if cached is not None:
        return cached
    g = np.arange(-m, m + 1)
    nx, ny = np.meshgrid(g, g, indexing="ij")
    n = np.stack([nx.ravel(), ny.ravel()], axis=1)
    r2 = (n * n).sum(axis=1)
    keep = (r2 > 0) & (r2 <= rmax * rmax)
    n = n[keep]
    r2 = r2[keep]
    order = np.lexsort((n[:, 1], n[:, 0], r2))
    n = np.ascontiguousarray(n[order], dtype=float)
    r = np.sqrt(r2[order].astype(float))
    _shell_cache[key] = (n, r)
    if len(_shell_cache) > 64:
        _shell_cache.pop(next(iter(_shell_cache)))
    return n, r


def _direct_tail_bound(xi, R):
    # sum_{m >= R} count(m) e^{-xi m}/m <= 3*_SHELL_COUNT * e^{-xi R}/(1 - e^{-xi})
    return 3.0 * _SHELL_COUNT * math.exp(-xi * R) / (-math.expm1(-xi))


def direct_sum(xi, q, tol=DEFAULT_SUM_TOL):
    """Direct shell summation of S(xi, q) with a rigorous tail bound.

    Parameters
    ----------
    xi : float
        imaginary frequency, must be >= XI_MIN_DIRECT so that the shell
        truncation error e^{-xi R} * O(R) can be bounded below tol.
    q : 2-vector
        quasi-momentum (any values; the sum is 2*pi-periodic).
    tol : float
        absolute truncation tolerance.

    Returns
    -------
    ScreenedSum
    """
    xi = float(xi)
    if xi < XI_MIN_DIRECT:
        raise ConvergenceTooSlow(
            f"direct shell sum needs xi >= {XI_MIN_DIRECT}, got xi = {xi}; "
            "use ewald_sum instead"
        )
    q = np.asarray(q, dtype=float)
    R = math.log(3.0 * _SHELL_COUNT / ((-math.expm1(-xi)) * tol)) / xi
    R = max(R, 1.5)
    n, r = _lattice_shells(R)
    value = float(np.sum(np.exp(-xi * r) / r * np.cos(n @ q)))
    return ScreenedSum(value=value, err_estimate=_direct_tail_bound(xi, R), method=SumMethod.DIRECT)


# ---------------------------------------------------------------------------
# Ewald route


@dataclass(frozen=True)
class EwaldTables:
    """Precomputed xi-dependent pieces of the Ewald split (q-independent)."""

    xi: float
    eta: float
    tol: float
    vectors: np.ndarray      # (L, 2) real-space lattice vectors
    weights: np.ndarray      # (L,) short-range weights f_short(|n|)
    self_term: float
    real_tail: float
    recip_reach: float       # keep reciprocal images with kappa below this
    recip_tail: float


def _short_range_weights(xi, eta, r):
    """f_short(r) = [e^{-xi r} erfc(eta r - xi/(2 eta)) + e^{xi r} erfc(eta r + xi/(2 eta))]/(2r).

    Evaluated in overflow-safe form: both terms equal
    erfcx(z_pm) * exp(-eta^2 r^2 - xi^2/(4 eta^2)) when z_pm >= 0.
    """
    zp = eta * r + xi / (2.0 * eta)
    zm = eta * r - xi / (2.0 * eta)
    expfac = np.exp(-(eta * r) ** 2 - (xi / (2.0 * eta)) ** 2)
    term_p = special.erfcx(zp) * expfac
    term_m = np.where(
        zm >= 0.0,
        special.erfcx(np.maximum(zm, 0.0)) * expfac,
        np.exp(-xi * r) * special.erfc(zm),
    )
    return (term_p + term_m) / (2.0 * r)


def _short_range_envelope(xi, eta, r):
    # bound on f_short(r): erfcx <= 1 for nonneg args, erfc <= 2 for negative
    gauss = math.exp(-((eta * r) ** 2) - (xi / (2.0 * eta)) ** 2) / r
    if eta * r - xi / (2.0 * eta) < 0.0:
        return gauss / 2.0 + math.exp(-xi * r) / r
    return gauss


def _real_space_radius(xi, eta, tol):
    m = 1
    while m < 400:
        tail = 0.0
        for j in range(m, m + 80):
            tail += _SHELL_COUNT * (2 * j + 1) * _short_range_envelope(xi, eta, float(j))
            if tail > 0.25 * tol:
                break
        if tail <= 0.25 * tol:
            return float(m), tail
        m += 1
    raise ConvergenceTooSlow("ewald real-space part did not truncate")  # pragma: no cover


def _recip_reach(xi, eta, tol):
    """Least kappa_cut with 2*pi/kappa * erfc(kappa/(2 eta)) summed over farther
    shells below tol/4 (shell counts grow like the real-space ones)."""
    kappa = max(xi, 1.0)
    while kappa < 400.0:
        # shells of images are spaced ~2*pi in kappa; bound the remainder sum
        tail = 0.0
        k = kappa
        for _ in range(60):
            nshell = (k - xi) / TWO_PI + 1.0
            tail += _SHELL_COUNT * (2 * nshell + 1) * TWO_PI / k * special.erfc(k / (2.0 * eta))
            k += TWO_PI
            if tail > 0.25 * tol:
                break
        if tail <= 0.25 * tol:
            return kappa, tail
        kappa += 1.0
    raise ConvergenceTooSlow("ewald reciprocal part did not truncate")  # pragma: no cover


def ewald_tables(xi, eta=None, tol=DEFAULT_SUM_TOL):
    """Build the q-independent tables of the Ewald split at frequency xi."""
    xi = float(xi)
    if xi < 0.0:
        raise ValueError("xi must be >= 0")
    if eta is None:
        eta = DEFAULT_ETA
    eta = float(eta)
    if not (eta > 0.0):
        raise ValueError("eta must be > 0")
    rmax, real_tail = _real_space_radius(xi, eta, tol)
    vectors, r = _lattice_shells(rmax)
    weights = _short_range_weights(xi, eta, r)
    a = xi / (2.0 * eta)
    self_term = (2.0 * eta / math.sqrt(math.pi)) * math.exp(-a * a) - xi * special.erfc(a)
    reach, recip_tail = _recip_reach(xi, eta, tol)
    return EwaldTables(
        xi=xi,
        eta=eta,
        tol=tol,
        vectors=vectors,
        weights=weights,
        self_term=self_term,
        real_tail=real_tail,
        recip_reach=reach,
        recip_tail=recip_tail,
    )


def _image_set(tables, qlo, qhi):
    """Reciprocal images N (sorted) relevant for any q in the box [qlo, qhi]."""
    center = 0.5 * (qlo + qhi)
    half = 0.5 * (qhi - qlo)
    halfdiag = float(np.hypot(half[0], half[1]))
    n0 = -np.round(center / TWO_PI)
    reach = tables.recip_reach + halfdiag
    kspan = int(math.ceil((reach + float(np.hypot(*(center + TWO_PI * n0)))) / TWO_PI)) + 1
    g = np.arange(-kspan, kspan + 1)
    nx, ny = np.meshgrid(g, g, indexing="ij")
    N = np.stack([nx.ravel(), ny.ravel()], axis=1) + n0
    p_center = center + TWO_PI * N
    dist = np.maximum(np.hypot(p_center[:, 0], p_center[:, 1]) - halfdiag, 0.0)
    keep = dist <= tables.recip_reach
    N = N[keep]
    d2 = ((N - n0) ** 2).sum(axis=1)
    order = np.lexsort((N[:, 1], N[:, 0], d2))
    return np.ascontiguousarray(N[order], dtype=float)


def ewald_eval(tables, q2d):
    """Evaluate S(xi, q) for a batch of quasi-momenta q2d of shape (m, 2)."""
    q2d = np.atleast_2d(np.asarray(q2d, dtype=float))
    real_part = np.cos(q2d @ tables.vectors.T) @ tables.weights
    N = _image_set(tables, q2d.min(axis=0), q2d.max(axis=0))
    p = q2d[:, None, :] + TWO_PI * N[None, :, :]
    kappa2 = tables.xi ** 2 + (p * p).sum(axis=2)
    if np.any(kappa2 <= 0.0) or (tables.xi == 0.0 and np.any(kappa2 < 1e-28)):
        raise EwaldSingular(
            "S(xi, q) diverges at xi = 0 with q on the reciprocal lattice (Gamma point)"
        )
    kappa = np.sqrt(kappa2)
    recip_part = (TWO_PI / kappa * special.erfc(kappa / (2.0 * tables.eta))).sum(axis=1)
    return real_part + recip_part - tables.self_term


def ewald_sum(xi, q, eta=None, tol=DEFAULT_SUM_TOL):
    """Ewald evaluation of S(xi, q), valid down to xi = 0 away from the Gamma point.

    The result is independent of the splitting parameter eta within tol
    (stable range roughly [0.5, 4] * sqrt(pi), default sqrt(pi)).

    Raises
    ------
    EwaldSingular
        if xi = 0 and q lies on the reciprocal lattice (divergent Gamma point).
    """
    tables = ewald_tables(xi, eta=eta, tol=tol)
    value = float(ewald_eval(tables, np.asarray(q, dtype=float))[0])
    return ScreenedSum(
        value=value,
        err_estimate=tables.real_tail + tables.recip_tail,
        method=SumMethod.EWALD,
    )


def phi_tilde(sys, xi, q, tol=DEFAULT_SUM_TOL):
    """Renormalized single-lattice scattering function 1/g - S(xi, q)/(4 pi).

    Real on the imaginary frequency axis; exactly 2*pi-periodic in q, which
    is what lets the inter-lattice kernel pull it out of the image sum.
    """
    value = ewald_sum(xi, q, tol=tol).value
    return 1.0 / sys.g_over_a - value / (4.0 * math.pi)


def phi_tilde_batch(sys, tables, q2d):
    """Batch phi_tilde over (m, 2) quasi-momenta, plus the magnitude scale
    used for pole detection."""
    s = ewald_eval(tables, q2d)
    phi = 1.0 / sys.g_over_a - s / (4.0 * math.pi)
    scale = abs(1.0 / sys.g_over_a) + np.abs(s) / (4.0 * math.pi)
    return phi, scale
