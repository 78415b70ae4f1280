"""Absorption nonlinearities and their structural conditions.

An absorption term f must vanish at 0, be strictly increasing, and behave
like a power law of index rho at infinity (regular variation).  Downstream
rate formulas consume the declared index, so construction cross-checks it
against a measured value; a silent mismatch would corrupt every prediction.

The structural conditions are asymptotic or global statements, so they are
checked on a documented sample grid (default: 64 log-spaced points spanning
[1e-3, 1e8]) with an explicit tolerance, and the grid travels with the
report for reproducibility.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigError, DomainError, NumericsError
from .extrapolation import aitken_limit
from .quadutil import integral_on_interval, upper_tail_integral

MONOTONE_TOL = 1e-10
INDEX_MISMATCH_TOL = 1e-2

DEFAULT_GRID = np.geomspace(1e-3, 1e8, 64)
DEFAULT_INDEX_LADDER = np.geomspace(1e2, 1e8, 21)


@dataclass(frozen=True)
class Nonlinearity:
    """Strictly increasing absorption f with f(0) = 0 and declared growth index."""

    name: str
    index: float
    func: Callable[[float], float]
    deriv: Callable[[float], float]
    primitive_closed: Callable[[float], float] | None = None
    # (coef, exponent) when the primitive is exactly coef * u**exponent
    primitive_power: tuple[float, float] | None = None

    def __call__(self, u):
        return self.func(u)


def power(rho: float) -> Nonlinearity:
    """f(u) = u**rho."""
    if rho <= 0.0:
        raise ConfigError(f"power index must be positive, got {rho:g}")
    return Nonlinearity(
        name=f"power({rho:g})",
        index=rho,
        func=lambda u: np.asarray(u, dtype=float) ** rho,
        deriv=lambda u: rho * np.asarray(u, dtype=float) ** (rho - 1.0),
        primitive_closed=lambda u: np.asarray(u, dtype=float) ** (rho + 1.0) / (rho + 1.0),
        primitive_power=(1.0 / (rho + 1.0), rho + 1.0),
    )


def power_log(rho: float) -> Nonlinearity:
    """f(u) = u**rho * log(1 + u); same growth index, slowly varying factor."""
    if rho <= 0.0:
        raise ConfigError(f"power index must be positive, got {rho:g}")
    return Nonlinearity(
        name=f"power_log({rho:g})",
        index=rho,
        func=lambda u: np.asarray(u, dtype=float) ** rho * np.log1p(np.asarray(u, dtype=float)),
        deriv=lambda u: (
            rho * np.asarray(u, dtype=float) ** (rho - 1.0) * np.log1p(np.asarray(u, dtype=float))
            + np.asarray(u, dtype=float) ** rho / (1.0 + np.asarray(u, dtype=float))
        ),
    )


_KEY_RE = re.compile(r"^\s*(power_log|power)\s*\(\s*([-+0-9.eE]+)\s*\)\s*$")


def make_nonlinearity(key: str) -> Nonlinearity:
    """Build a named nonlinearity, e.g. "power(2)" or "power_log(3)"."""
    m = _KEY_RE.match(key)
    if not m:
        raise ConfigError(f"unknown nonlinearity key {key!r} (expected power(rho) or power_log(rho))")
    kind, arg = m.group(1), float(m.group(2))
    nl = power(arg) if kind == "power" else power_log(arg)
    validate_declared_index(nl)
    return nl


def primitive(nl: Nonlinearity, u: float) -> float:
    """F(u) = integral of f from 0 to u; closed form when available."""
    if u < 0.0:
        raise DomainError(f"primitive needs u >= 0, got {u:g}")
    if u == 0.0:
        return 0.0
    if nl.primitive_closed is not None:
        return float(nl.primitive_closed(u))
    return integral_on_interval(nl.func, 0.0, u)


def rv_index_estimate(nl, xi_probe: float = 2.0, u_ladder=None) -> float:
    """Growth index of f at infinity: log(f(xi*u)/f(u))/log(xi), extrapolated.

    ``nl`` may be a Nonlinearity or any positive callable.  Raises on
    non-finite evaluations, naming the offending abscissa.
    """
    if xi_probe <= 0.0 or xi_probe == 1.0:
        raise DomainError(f"probe factor must be positive and != 1, got {xi_probe:g}")
    fn = nl.func if isinstance(nl, Nonlinearity) else nl
    ladder = DEFAULT_INDEX_LADDER if u_ladder is None else np.asarray(u_ladder, dtype=float)
    if ladder.size < 1 or np.any(np.diff(ladder) <= 0.0):
        raise DomainError("u_ladder must be increasing")
    with np.errstate(over="ignore", invalid="ignore"):
        num = np.array([float(fn(xi_probe * u)) for u in ladder])
        den = np.array([float(fn(u)) for u in ladder])
    bad = ~(np.isfinite(num) & np.isfinite(den) & (num > 0.0) & (den > 0.0))
    if np.any(bad):
        raise NumericsError(f"non-finite evaluation at u = {ladder[bad][0]:g}")
    slopes = np.log(num / den) / math.log(xi_probe)
    return aitken_limit(slopes).value


def validate_declared_index(nl: Nonlinearity) -> float:
    """Measured growth index must match the declared one within 1e-2."""
    measured = rv_index_estimate(nl)
    if abs(measured - nl.index) > INDEX_MISMATCH_TOL:
        raise ConfigError(
            f"declared growth index {nl.index:g} of {nl.name} disagrees with "
            f"measured {measured:.6g} (tolerance {INDEX_MISMATCH_TOL:g})"
        )
    return measured


@dataclass(frozen=True)
class ConditionReport:
    """Outcome of the structural-condition checks for a nonlinearity at given p.

    Flags:
      superlinear_index  -- growth index exceeds p - 1
      quotient_increasing -- s -> s**-(p-1) f(s) is increasing
      scaling_bound      -- f(u) >= eps**-l f(eps*u) for sampled eps in (0, 1)
      tail_integrable    -- Keller-Osserman-type integral of F**(-1/p) is finite
      convex             -- second differences of f are nonnegative
    """

    superlinear_index: bool
    quotient_increasing: bool
    scaling_bound: bool
    tail_integrable: bool
    convex: bool
    measured_index: float
    scaling_exponent: float
    p: float
    grid: np.ndarray = field(repr=False, default=None)
    tolerance: float = MONOTONE_TOL

    @property
    def all_core(self) -> bool:
        return self.superlinear_index and self.quotient_increasing and self.tail_integrable


def _increasing_on(values: np.ndarray, tol: float) -> bool:
    diffs = np.diff(values)
    scale = np.maximum(np.abs(values[:-1]), np.abs(values[1:]))
    return bool(np.all(diffs >= -tol * np.maximum(scale, 1.0)))


def check_conditions(
    nl: Nonlinearity,
    p: float,
    grid=None,
    scaling_exponent: float | None = None,
    eps_samples=(0.5, 0.1, 0.01),
) -> ConditionReport:
    """Verify the structural hypotheses of the theory on a sample grid.

    Failures are recorded as flags, never raised.  ``scaling_exponent``
    defaults to the declared growth index, which is the natural exponent for
    power-type absorption.
    """
    if p <= 1.0:
        raise DomainError(f"p must exceed 1, got {p:g}")
    grid = DEFAULT_GRID if grid is None else np.asarray(grid, dtype=float)
    l = nl.index if scaling_exponent is None else float(scaling_exponent)

    measured = rv_index_estimate(nl)
    superlinear = measured > p - 1.0 + 1e-9

    f_vals = np.array([float(nl.func(u)) for u in grid])
    quotient = grid ** (-(p - 1.0)) * f_vals
    quotient_increasing = _increasing_on(quotient, MONOTONE_TOL)

    scaling_ok = l > max(1.0, p - 1.0)
    if scaling_ok:
        for eps in eps_samples:
            lhs = f_vals
            rhs = eps ** (-l) * np.array([float(nl.func(eps * u)) for u in grid])
            if not np.all(lhs >= rhs * (1.0 - 1e-12) - MONOTONE_TOL):
                scaling_ok = False
                break

    tail_ok = _tail_integrable(nl, p, measured)

    second = f_vals[2:] - 2.0 * f_vals[1:-1] + f_vals[:-2]
    convex = bool(np.all(second >= -MONOTONE_TOL * np.maximum(np.abs(f_vals[1:-1]), 1.0)))

    return ConditionReport(
        superlinear_index=superlinear,
        quotient_increasing=quotient_increasing,
        scaling_bound=scaling_ok,
        tail_integrable=tail_ok,
        convex=convex,
        measured_index=measured,
        scaling_exponent=l,
        p=p,
        grid=grid,
    )


def _tail_integrable(nl: Nonlinearity, p: float, measured_index: float) -> bool:
    """Finite integral of F**(-1/p) over [1, inf)?

    The integrand decays like s**(-(rho+1)/p); a tail index <= 1 means the
    integral diverges, which the quadrature would only discover slowly.
    """
    decay = (measured_index + 1.0) / p
    if decay <= 1.0 + 1e-9:
        return False
    try:
        val = upper_tail_integral(lambda s: primitive(nl, s) ** (-1.0 / p), 1.0, decay, epsrel=1e-9)
    except NumericsError:
        return False
    return np.isfinite(val)


def blowup_order(rho: float, p: float) -> float:
    """The derived index r = (rho+1)/(rho+1-p) controlling blow-up profiles."""
    if rho <= p - 1.0:
        raise DomainError(f"need rho > p - 1 (got rho={rho:g}, p={p:g})")
    return (rho + 1.0) / (rho + 1.0 - p)
