"""Quadrature helpers for tail integrals of power-law-decaying integrands."""

from __future__ import annotations

import numpy as np
from scipy.integrate import quad

from .errors import DomainError, NumericsError


def upper_tail_integral(func, lower: float, decay: float, *, epsrel: float = 1e-11) -> float:
    """Evaluate ``int_lower^inf func(s) ds`` for ``func ~ s**(-decay)``.

    ``decay`` must exceed 1 (integrable tail); it is used to pick the
    substitution s = lower * x**(-m) with m = 2/(decay-1), which turns the
    integrand into a smooth function on (0, 1] (exactly linear for a pure
    power law), so adaptive quadrature converges to near machine accuracy.
    """
    if lower <= 0.0:
        raise DomainError(f"lower limit must be positive, got {lower:g}")
    if decay <= 1.0:
        raise DomainError(f"tail decay index must exceed 1 for integrability, got {decay:g}")
    m = 2.0 / (decay - 1.0)

    def transformed(x: float) -> float:
        s = lower * x ** (-m)
        if not np.isfinite(s):
            return 0.0
        with np.errstate(over="ignore", invalid="ignore"):
            v = func(s) * m * s / x
        return v if np.isfinite(v) else 0.0

    val, err = quad(transformed, 0.0, 1.0, epsabs=0.0, epsrel=epsrel, limit=200)
    if not np.isfinite(val):
        raise NumericsError(f"tail integral from {lower:g} did not converge")
    if err > max(1e3 * epsrel * abs(val), 1e-290):
        raise NumericsError(
            f"tail integral from {lower:g} has large error estimate {err:g} vs value {val:g}"
        )
    return float(val)


def integral_on_interval(func, a: float, b: float, *, epsrel: float = 1e-11) -> float:
    """Plain adaptive quadrature on [a, b] with a finiteness check."""
    val, _ = quad(func, a, b, epsabs=0.0, epsrel=epsrel, limit=200)
    if not np.isfinite(val):
        raise NumericsError(f"integral over [{a:g}, {b:g}] did not converge")
    return float(val)
