"""Blow-down ODEs: w' = -g(w) with infinite initial data.

The solution is never time-stepped from a large cap (that would carry an
initial-layer error of order cap**(1-gamma)).  Instead it is represented
through the first integral

    G(w) = integral_w^inf ds / g(s),

which satisfies G(w(t)) = t exactly, so w(t) = G^{-1}(t) up to quadrature and
root-finding tolerances.  The tail integral demands g to grow faster than
linearly; the growth index is either declared or measured on the fly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .errors import ConfigError, DomainError, NumericsError
from .extrapolation import LadderLimit, aitken_limit
from .nonlinearity import Nonlinearity, rv_index_estimate
from .quadutil import upper_tail_integral


class BlowdownCurve:
    """Decreasing curve w(t) with w' = -g(w) and w(0+) = infinity."""

    def __init__(self, g, index: float | None = None, name: str = "blowdown"):
        if isinstance(g, Nonlinearity):
            self.g = g.func
            index = g.index if index is None else index
            name = g.name
        else:
            self.g = g
        if index is None:
            index = rv_index_estimate(self.g)
        if index <= 1.0 + 1e-12:
            raise ConfigError(
                f"growth index {index:g} of {name} makes the tail of 1/g non-integrable"
            )
        self.index = float(index)
        self.name = name

    def first_integral(self, w: float) -> float:
        """G(w) = integral of 1/g from w to infinity."""
        if w <= 0.0:
            raise DomainError(f"first integral needs w > 0, got {w:g}")
        return upper_tail_integral(lambda s: 1.0 / float(self.g(s)), w, self.index)

    def value(self, t):
        """w(t) = G^{-1}(t) by geometric bracketing and Brent root-finding."""
        arr = np.asarray(t, dtype=float)
        if np.any(arr <= 0.0):
            raise DomainError("blow-down time must be positive")
        out = np.vectorize(self._invert)(arr)
        return float(out) if np.isscalar(t) or arr.ndim == 0 else out

    def _invert(self, t: float) -> float:
        lo = hi = 1.0
        for _ in range(300):
            if self.first_integral(hi) <= t:
                break
            hi *= 8.0
        else:
            raise NumericsError(f"failed to bracket blow-down value at t = {t:g}")
        for _ in range(300):
            if self.first_integral(lo) >= t:
                break
            lo /= 8.0
        else:
            raise DomainError(
                f"t = {t:g} exceeds the reachable range of the curve (w would leave (0, inf))"
            )
        if lo == hi:
            return lo
        # a bracket end can land exactly on the root (nice rational times)
        if abs(self.first_integral(lo) - t) <= 1e-13 * t:
            return lo
        if abs(self.first_integral(hi) - t) <= 1e-13 * t:
            return hi
        return math.exp(
            brentq(
                lambda L: self.first_integral(math.exp(L)) - t,
                math.log(lo),
                math.log(hi),
                rtol=1e-14,
            )
        )

    def ode_residual(self, t: float, rel_step: float = 1e-4) -> float:
        """Relative defect of w' = -g(w) measured by central differences."""
        h = rel_step * t
        dw = (self.value(t + h) - self.value(t - h)) / (2.0 * h)
        rhs = float(self.g(self.value(t)))
        return abs(dw + rhs) / abs(rhs)

    def __call__(self, t):
        return self.value(t)


def solve_blowdown(g, t, index: float | None = None):
    """Value at time t of the blow-down curve for absorption g."""
    return BlowdownCurve(g, index=index).value(t)


@dataclass(frozen=True)
class RatioEvidence:
    """v(t)/w(t) along a decreasing time ladder plus its extrapolated limit."""

    times: np.ndarray
    ratios: np.ndarray
    limit: LadderLimit

    @property
    def sup(self) -> float:
        return float(np.max(self.ratios))

    @property
    def inf(self) -> float:
        return float(np.min(self.ratios))


def equivalence_check(g, h, t_ladder, g_index: float | None = None, h_index: float | None = None) -> RatioEvidence:
    """Compare the blow-down curves of g and h along t -> 0+.

    When g/h -> 1 at infinity the ratio of curves tends to 1; the evidence
    carries the raw ladder and the Aitken-extrapolated limit.
    """
    times = np.asarray(t_ladder, dtype=float)
    if np.any(np.diff(times) >= 0.0) or np.any(times <= 0.0):
        raise DomainError("t_ladder must be positive and strictly decreasing")
    cg = BlowdownCurve(g, index=g_index, name="numerator")
    ch = BlowdownCurve(h, index=h_index, name="denominator")
    ratios = np.array([cg.value(t) / ch.value(t) for t in times])
    return RatioEvidence(times=times, ratios=ratios, limit=aitken_limit(ratios))


def two_scale_equivalence(g, h, c: float, t_ladder, g_index: float | None = None, h_index: float | None = None) -> RatioEvidence:
    """Bounded-ratio evidence for v' = -g(c v) h(v) versus w' = -g(w) h(w).

    Both right-hand sides must jointly grow superlinearly; the ratio w/v
    stays within fixed positive bounds on the ladder.
    """
    if c <= 0.0:
        raise DomainError(f"scale factor must be positive, got {c:g}")
    gi = rv_index_estimate(g) if g_index is None else g_index
    hi = rv_index_estimate(h) if h_index is None else h_index
    if gi + hi <= 1.0 + 1e-12:
        raise ConfigError(f"combined growth index {gi + hi:g} must exceed 1")
    scaled = BlowdownCurve(lambda u: float(g(c * u)) * float(h(u)), index=gi + hi, name="scaled")
    plain = BlowdownCurve(lambda u: float(g(u)) * float(h(u)), index=gi + hi, name="plain")
    times = np.asarray(t_ladder, dtype=float)
    if np.any(np.diff(times) >= 0.0) or np.any(times <= 0.0):
        raise DomainError("t_ladder must be positive and strictly decreasing")
    ratios = np.array([plain.value(t) / scaled.value(t) for t in times])
    ev = RatioEvidence(times=times, ratios=ratios, limit=aitken_limit(ratios))
    if not (np.isfinite(ev.sup) and ev.inf > 0.0):
        raise NumericsError("two-scale ratio left (0, inf)")
    return ev
