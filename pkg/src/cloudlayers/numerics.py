"""Special functions and small numerical kernels shared by the likelihood families.

Everything here is a pure function of its arguments, so unrestricted
concurrent use is safe.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special as _sp

# Positivity clamp applied to every constrained parameter (shape, scale,
# concentration). Keeps the EM iterations away from singular regions.
MIN_ARG = 1e-8

# Ceiling for positivity-constrained parameters during gradient ascent.
# Degenerate data (e.g. a point mass on a circle) drives concentrations to
# infinity; the ceiling keeps log-densities finite.
PARAM_CEIL = 1e6


@dataclass(frozen=True)
class SpecialFnConfig:
    """Knobs for the series/clamp behaviour of the special functions."""

    series_terms: int = 40
    min_arg: float = MIN_ARG

    def __post_init__(self):
        if self.series_terms < 20:
            raise ValueError("series_terms must be >= 20")
        if self.min_arg <= 0:
            raise ValueError("min_arg must be positive")


def _check_positive(x, name):
    arr = np.asarray(x, dtype=float)
    if np.any(arr <= 0):
        raise ValueError(f"{name} must be strictly positive")
    return arr


def clamp_positive(x, min_arg=MIN_ARG, ceil=PARAM_CEIL):
    """Clamp a positivity-constrained parameter into [min_arg, ceil]."""
    return np.clip(x, min_arg, ceil)


def log_gamma(x):
    """ln Gamma(x) for x > 0."""
    return _sp.gammaln(_check_positive(x, "x"))


def digamma(x):
    """psi(x) = Gamma'(x) / Gamma(x) for x > 0."""
    return _sp.psi(_check_positive(x, "x"))


def bessel_i(order, kappa):
    """Modified Bessel function of the first kind, order 0 or 1.

    Computed from the exponentially scaled function, so intermediate values
    stay finite; the returned value itself overflows only past kappa ~ 700.
    """
    if order not in (0, 1):
        raise ValueError("order must be 0 or 1")
    k = _check_positive(kappa, "kappa")
    return _sp.ive(order, k) * np.exp(k)


def log_bessel_i0(kappa):
    """log I0(kappa), overflow-free for arbitrarily large kappa."""
    k = _check_positive(kappa, "kappa")
    return np.log(_sp.ive(0, k)) + k


def bessel_i_ratio(kappa):
    """I1(kappa) / I0(kappa), computed in the scaled domain."""
    k = _check_positive(kappa, "kappa")
    return _sp.ive(1, k) / _sp.ive(0, k)


def finite_diff_gradient(f, x, h=1e-6):
    """Central-difference gradient of a scalar function. Test oracle only."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2.0 * h)
    return g
