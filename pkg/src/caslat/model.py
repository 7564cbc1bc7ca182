"""Dimensionless system parameters, momentum bookkeeping and tolerances.

All internal computation uses the lattice spacing a = 1: lengths are given
in units of a, energies in units of 1/a and temperatures as the product
T*a.  The two sheets are square lattices of 3D delta potentials separated
by b and displaced laterally by c; the renormalized on-site coupling g has
the dimension of a length and enters only through g/a.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import NonPositiveSeparation, ZeroCoupling

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class LatticeSystem:
    """Dimensionless parameters of the double-lattice system.

    Attributes
    ----------
    g_over_a : float
        renormalized coupling in units of a.  Negative values are the
        non-resonant branch of the Phi_nn = 1/g convention; positive values
        develop a zero of phi_tilde at zero frequency near |q| ~ g/2 and the
        energy pipeline reports the breakdown instead of a value.
    b_over_a : float
        sheet separation, > 0.
    c_over_a : tuple(float, float)
        lateral displacement, stored reduced modulo 1 per component.
    """

    g_over_a: float
    b_over_a: float
    c_over_a: tuple


@dataclass(frozen=True)
class MomentumPoint:
    """Quasi-momentum q in [-pi, pi)^2 plus the reciprocal integer pair N."""

    q: tuple
    N: tuple

    def __post_init__(self):
        if not all(-math.pi <= qi < math.pi for qi in self.q):
            raise ValueError("quasi-momentum components must lie in [-pi, pi)")
        if not all(float(ni).is_integer() for ni in self.N):
            raise ValueError("reciprocal indices must be integers")


@dataclass(frozen=True)
class Tolerances:
    """Global numerical tolerances.

    sum_tol : absolute truncation tolerance for lattice/reciprocal sums
    quad_rel_tol : relative tolerance for quadratures
    matsubara_tail_tol : absolute tolerance for the dropped Matsubara tail
    """

    sum_tol: float = 1e-12
    quad_rel_tol: float = 1e-8
    matsubara_tail_tol: float = 1e-10

    def __post_init__(self):
        for name in ("sum_tol", "quad_rel_tol", "matsubara_tail_tol"):
            value = getattr(self, name)
            if not (value > 0.0):
                raise ValueError(f"{name} must be strictly positive, got {value!r}")


def make_system(g_over_a, b_over_a, c_over_a=(0.0, 0.0)):
    """Construct a normalized :class:`LatticeSystem`.

    The displacement is reduced modulo 1 per component, so systems built
    from c and c + (integer vector) carry identical stored state.

    Raises
    ------
    NonPositiveSeparation
        if b_over_a <= 0 (or is not a number).
    ZeroCoupling
        if g_over_a == 0 (trivial decoupled system).
    """
    g = float(g_over_a)
    b = float(b_over_a)
    if not (b > 0.0) or not math.isfinite(b):
        raise NonPositiveSeparation(f"b_over_a must be > 0, got {b_over_a!r}")
    if g == 0.0:
        raise ZeroCoupling("g_over_a = 0 is the decoupled trivial system")
    if not math.isfinite(g):
        raise ZeroCoupling(f"g_over_a must be a finite nonzero number, got {g_over_a!r}")
    c = tuple(float(ci) % 1.0 for ci in c_over_a)
    if len(c) != 2:
        raise ValueError("c_over_a must be a 2-vector")
    return LatticeSystem(g_over_a=g, b_over_a=b, c_over_a=c)


def full_momentum(p):
    """Return the full momentum k = q + 2*pi*N of a :class:`MomentumPoint`."""
    return np.asarray(p.q, dtype=float) + TWO_PI * np.asarray(p.N, dtype=float)


def split_momentum(k):
    """Split an arbitrary plane-wave label k into its unique (q, N) pair."""
    k = np.asarray(k, dtype=float)
    N = np.floor((k + math.pi) / TWO_PI)
    q = k - TWO_PI * N
    # floating roundoff can leave q == pi; fold it back to -pi
    high = q >= math.pi
    q[high] -= TWO_PI
    N[high] += 1
    return MomentumPoint(q=tuple(q), N=tuple(int(n) for n in N))


def canonical_displacement(c):
    """Canonical representative of {c, -c} modulo 1, plus a conjugation flag.

    The kernel's image phases are evaluated at the lexicographically smaller
    of c and (-c) mod 1 and conjugated if the input was the other member, so
    systems with displacement c and -c produce bitwise identical |h|^2.
    """
    c = (float(c[0]), float(c[1]))
    neg = ((-c[0]) % 1.0, (-c[1]) % 1.0)
    if neg < c:
        return neg, True
    return c, False
