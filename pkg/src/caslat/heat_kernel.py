"""Heat-kernel traces for delta backgrounds and the scaled complementary
error function needed to evaluate them without overflow.

The exact single-delta trace separates into the free (volume) part
V/(4 pi t)^{3/2} and a non-trivial part (1/2) e^{16 pi^2 t/g^2}
[1 - Phi(4 pi sqrt(t)/g)], which is (1/2) erfcx(4 pi sqrt(t)/g) in
overflow-safe form.  The Born iterates of the two-sheet integral equation
contribute V/(4 pi t)^{3/2} at order zero and
2 N^2 g / ((4 pi)^{3/2} sqrt(t)) at first order (N^2 sites per sheet);
orders >= 2 hit divergent integrals and are intentionally not implemented.
"""

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import FitDegenerate

_ERFCX_SWITCH = 25.0
_FOUR_PI_32 = (4.0 * math.pi) ** 1.5


class TraceOrder(Enum):
    EXACT_SINGLE_DELTA = "exact_single_delta"
    BORN0 = "born0"
    BORN1 = "born1"


@dataclass(frozen=True)
class HeatKernelTrace:
    t: float
    value: float
    order: TraceOrder


def erfcx(x):
    """Scaled complementary error function e^{x^2} erfc(x) for x >= 0.

    Below x = 25 the direct product is exact to a few ulp (both factors are
    well inside the normal range there); above it the factors overflow /
    underflow separately and the asymptotic series

        erfcx(x) ~ 1/(x sqrt(pi)) * sum_k (-1)^k (2k-1)!!/(2 x^2)^k

    is summed to its smallest term (truncation below 1e-22 relative for
    x >= 25).
    """
    x = float(x)
    if x < 0.0:
        raise ValueError(f"erfcx defined here for x >= 0, got {x!r}")
    if x < _ERFCX_SWITCH:
        return math.exp(x * x) * math.erfc(x)
    inv2x2 = 1.0 / (2.0 * x * x)
    term = 1.0
    acc = 1.0
    for k in range(1, 40):
        new = -term * (2 * k - 1) * inv2x2
        if abs(new) >= abs(term):
            break
        term = new
        acc += term
        if abs(term) < 1e-22:
            break
    return acc / (x * math.sqrt(math.pi))


def exact_single_delta_trace(t, g):
    """Non-volume part of the exact single-delta heat-kernel trace.

    Equals (1/2) e^{16 pi^2 t/g^2} [1 - Phi(4 pi sqrt(t)/g)] evaluated as
    (1/2) erfcx(4 pi sqrt(t)/g); finite for arbitrarily small g > 0, and
    bounded by 1/2 for all t, g > 0.
    """
    t = float(t)
    g = float(g)
    if not (t > 0.0):
        raise ValueError(f"t must be > 0, got {t!r}")
    if not (g > 0.0):
        raise ValueError(f"g must be > 0, got {g!r}")
    value = 0.5 * erfcx(4.0 * math.pi * math.sqrt(t) / g)
    return HeatKernelTrace(t=t, value=value, order=TraceOrder.EXACT_SINGLE_DELTA)


def born0(t, volume):
    """Free trace V/(4 pi t)^{3/2}."""
    t = float(t)
    volume = float(volume)
    if not (t > 0.0):
        raise ValueError(f"t must be > 0, got {t!r}")
    if not (volume > 0.0):
        raise ValueError(f"volume must be > 0, got {volume!r}")
    return HeatKernelTrace(t=t, value=volume / (4.0 * math.pi * t) ** 1.5, order=TraceOrder.BORN0)


def born1(t, g, n_sites):
    """First Born trace for n_sites delta centers: n_sites * g / ((4 pi)^{3/2} sqrt(t)).

    The two-sheet system with N^2 sites per sheet corresponds to
    n_sites = 2 N^2.
    """
    t = float(t)
    if not (t > 0.0):
        raise ValueError(f"t must be > 0, got {t!r}")
    value = n_sites * g / (_FOUR_PI_32 * math.sqrt(t))
    return HeatKernelTrace(t=t, value=value, order=TraceOrder.BORN1)


def per_site_born1(t, g):
    """First Born trace of a single delta center, g/((4 pi)^{3/2} sqrt(t));
    the g -> 0 limit of exact_single_delta_trace."""
    return born1(t, g, 1).value


def _power_fit(t, v):
    """Fit v = coef * t^expo in log space; returns (expo, coef, residual)."""
    lt = np.log(t)
    lv = np.log(v)
    slope, intercept = np.polyfit(lt, lv, 1)
    resid = float(np.max(np.abs(lv - (slope * lt + intercept))))
    return float(slope), float(math.exp(intercept)), resid


def hk_coefficient_report(t_grid, g, n_sites):
    """Fit the small-t powers of the implemented traces.

    Fits born0 (volume 1), born1 (n_sites centers) and the exact
    single-delta trace on t_grid to c * t^p and reports exponents,
    coefficients and log-space residuals.  The Born-1 term lands on
    t^{-1/2}, i.e. the n/2 = 1 slot of the (4 pi t)^{-3/2} t^{n/2} a_{n/2}
    expansion; the observed power is reported rather than asserted against
    any labeling.

    Raises FitDegenerate for unusable grids or fits.
    """
    t = np.asarray(sorted(float(x) for x in t_grid))
    if len(t) < 4:
        raise FitDegenerate(f"need >= 4 proper-time points, got {len(t)}")
    if t[0] <= 0.0 or t[-1] > 0.1:
        raise FitDegenerate("t_grid must lie in (0, 0.1]")
    report = {}
    families = {
        "born0": np.array([born0(x, 1.0).value for x in t]),
        "born1": np.array([born1(x, g, n_sites).value for x in t]),
        "exact_per_delta": np.array([exact_single_delta_trace(x, g).value for x in t]),
    }
    for name, vals in families.items():
        if np.any(vals <= 0.0):
            raise FitDegenerate(f"{name} trace not positive on the grid")
        expo, coef, resid = _power_fit(t, vals)
        if resid > 0.2:
            raise FitDegenerate(f"{name} trace is not a power law on this grid "
                                f"(log residual {resid:g})")
        report[name] = {"exponent": expo, "coefficient": coef, "residual": resid}
    report["born1_expansion_slot"] = 1.0  # a_{n/2} slot with n/2 = 1
    return report
