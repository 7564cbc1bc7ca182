"""Inter-lattice reflection kernel h(i xi, q) and its log integrand.

On the imaginary frequency axis the kernel of the per-cell energy formula is

    h(i xi, q) = - sum_N exp(-Gamma_N b) exp(i 2 pi N . c) / (2 Gamma_N phi_tilde(xi, q)),

with Gamma_N = sqrt(xi^2 + |q + 2 pi N|^2) and phi_tilde evaluated once (it
is exactly 2*pi-periodic in the full momentum, hence N-independent).  The
image sum is truncated when the rigorous tail bound
exp(-Gamma b) / (2 Gamma |phi_tilde|) summed over dropped shells falls below
the sum tolerance; the shell |N|_inf <= 1 is always retained.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import lattice_sums
from .errors import GammaPointSingular, NonPhysicalKernel, PhiTildePole
from .model import TWO_PI, Tolerances, canonical_displacement

_POLE_REL = 1e-12
# absolute envelope below which dropped image shells cannot matter for any
# phi_tilde the pole guard lets through
_IMAGE_ENVELOPE_FACTOR = 1e-4


@dataclass(frozen=True)
class KernelValue:
    h: complex
    h_abs2: float
    n_images: int
    err_estimate: float


def axial_wavenumber(xi, q, N):
    """Imaginary-axis axial wavenumber sqrt(xi^2 + |q + 2 pi N|^2)."""
    k = np.asarray(q, dtype=float) + TWO_PI * np.asarray(N, dtype=float)
    return float(math.sqrt(xi * xi + float(k @ k)))


def _image_list(xi, b, tol_abs):
    """Images N sorted by shell; dropped-shell envelope bound appended.

    The envelope is exp(-Gamma_low b)/(2 Gamma_low) with
    Gamma_low = sqrt(xi^2 + (2 pi m - pi sqrt(2))^2) for shell m, valid for
    every q in the (closed) Brillouin zone.
    """
    qmax = math.pi * math.sqrt(2.0)
    m = 1
    while True:
        glow = math.sqrt(xi * xi + max(0.0, TWO_PI * (m + 1) - qmax) ** 2)
        count = lattice_sums._SHELL_COUNT * (2 * (m + 1) + 1)
        tail = count * math.exp(-glow * b) / (2.0 * glow) / (-math.expm1(-TWO_PI * b))
        if tail <= tol_abs or m >= 40:
            break
        m += 1
    g = np.arange(-m, m + 1)
    nx, ny = np.meshgrid(g, g, indexing="ij")
    N = np.stack([nx.ravel(), ny.ravel()], axis=1)
    d2 = (N * N).sum(axis=1)
    order = np.lexsort((N[:, 1], N[:, 0], d2))
    return np.ascontiguousarray(N[order], dtype=float), tail


class KernelEvaluator:
    """Vectorized kernel evaluation over batches of quasi-momenta at fixed xi.

    Phases are evaluated at the canonical representative of {c, -c} mod 1 so
    that displacement reversal gives bitwise identical |h|^2 (for dyadic c).
    """

    def __init__(self, sys, xi, tol=None):
        if tol is None:
            tol = Tolerances()
        self.sys = sys
        self.xi = float(xi)
        self.tol = tol
        self.tables = lattice_sums.ewald_tables(self.xi, tol=tol.sum_tol)
        c_hat, self.conjugate = canonical_displacement(sys.c_over_a)
        self.images, self.image_tail_env = _image_list(
            self.xi, sys.b_over_a, _IMAGE_ENVELOPE_FACTOR * tol.sum_tol
        )
        theta = TWO_PI * (self.images @ np.asarray(c_hat))
        self.cos_theta = np.cos(theta)
        self.sin_theta = np.sin(theta)

    def components(self, q2d):
        """Return (h_re, h_im, h_abs2, err) arrays for quasi-momenta (m, 2).

        h_im is reported with the conjugation for the original (non-canonical)
        displacement already applied; h_abs2 is computed before that sign flip
        and is therefore identical for c and -c.
        """
        q2d = np.atleast_2d(np.asarray(q2d, dtype=float))
        phi, scale = lattice_sums.phi_tilde_batch(self.sys, self.tables, q2d)
        bad = np.abs(phi) < _POLE_REL * scale
        if np.any(bad):
            i = int(np.argmax(bad))
            raise PhiTildePole(
                f"phi_tilde vanished within resolution at xi={self.xi}, q={tuple(q2d[i])}",
                xi=self.xi,
                q=tuple(q2d[i]),
            )
        p = q2d[:, None, :] + TWO_PI * self.images[None, :, :]
        gamma = np.sqrt(self.xi ** 2 + (p * p).sum(axis=2))
        with np.errstate(divide="raise"):
            w = np.exp(-gamma * self.sys.b_over_a) / (2.0 * gamma)
        num_re = w @ self.cos_theta
        num_im = w @ self.sin_theta
        h_re = -num_re / phi
        h_im = -num_im / phi
        h_abs2 = h_re * h_re + h_im * h_im
        if self.conjugate:
            h_im = -h_im
        s_err = self.tables.real_tail + self.tables.recip_tail
        err = (self.image_tail_env + np.sqrt(h_abs2) * s_err / (4.0 * math.pi)) / np.abs(phi)
        return h_re, h_im, h_abs2, err

    def log_integrand(self, q2d):
        """ln(1 - |h|^2) over a batch; raises NonPhysicalKernel on |h|^2 >= 1."""
        q2d = np.atleast_2d(np.asarray(q2d, dtype=float))
        _, _, h_abs2, err = self.components(q2d)
        if np.any(h_abs2 >= 1.0):
            i = int(np.argmax(h_abs2))
            raise NonPhysicalKernel(
                f"|h|^2 = {h_abs2[i]:.6g} >= 1 at xi={self.xi}, q={tuple(q2d[i])}",
                xi=self.xi,
                q=tuple(q2d[i]),
                h_abs2=float(h_abs2[i]),
            )
        return np.log1p(-h_abs2), err


def reflection_kernel(sys, xi, q, tol=None):
    """Assemble the inter-lattice reflection kernel at one (xi, q) point.

    Returns a :class:`KernelValue` with the kernel, its modulus squared, the
    number of retained reciprocal images and an error estimate combining the
    dropped-image bound with the propagated lattice-sum truncation error.

    Raises
    ------
    GammaPointSingular
        at xi = 0, q = 0 exactly.
    PhiTildePole
        if phi_tilde(xi, q) vanishes within numerical resolution.
    """
    xi = float(xi)
    q = np.asarray(q, dtype=float)
    if xi == 0.0 and float(q @ q) == 0.0:
        raise GammaPointSingular("kernel undefined at xi = 0, q = 0")
    ev = KernelEvaluator(sys, xi, tol)
    h_re, h_im, h_abs2, err = ev.components(q[None, :])
    return KernelValue(
        h=complex(h_re[0], h_im[0]),
        h_abs2=float(h_abs2[0]),
        n_images=len(ev.images),
        err_estimate=float(err[0]),
    )


def kernel_log_integrand(sys, xi, q, tol=None):
    """ln(1 - |h(i xi, q)|^2) <= 0 at one point of the (xi, q) domain."""
    kv = reflection_kernel(sys, xi, q, tol)
    if kv.h_abs2 >= 1.0:
        raise NonPhysicalKernel(
            f"|h|^2 = {kv.h_abs2:.6g} >= 1 at xi={xi}, q={tuple(np.asarray(q, float))}",
            xi=xi,
            q=tuple(np.asarray(q, dtype=float)),
            h_abs2=kv.h_abs2,
        )
    return math.log1p(-kv.h_abs2)
