"""Boundary weight kernels and the blow-up profile function.

A weight kernel k is a positive monotone function on (0, mu) whose primitive
K satisfies (K/k)'(0+) = ell in (0, inf).  The kernel measures how the
absorption weight degenerates (or blows up) at the boundary; ell is the shape
parameter every rate formula depends on.

The blow-up profile is the decreasing function phi defined by

    integral_{phi(t)}^inf  ds / (p' F(s))**(1/p)  =  t,      p' = p/(p-1),

where F is the primitive of the absorption f.  The boundary rate of a
blow-up solution is phi(K(d)) up to an explicit constant.  phi is computed
by inverting the tail integral, never by time-stepping from infinity.

The effective absorption  (k o K^{-1} o phi^{-1})(s)**p * f(s)  transfers
the kernel's boundary degeneracy onto the absorption; its growth index is
q = rho - (rho - p + 1)(1 - ell).
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy.optimize import brentq

from .errors import ConfigError, DomainError, NumericsError
from .extrapolation import LadderLimit, aitken_limit, geometric_ladder
from .nonlinearity import Nonlinearity, blowup_order, primitive
from .quadutil import upper_tail_integral


@dataclass(frozen=True)
class WeightKernel:
    """Positive monotone kernel on (0, mu) with declared limit (K/k)'(0+)."""

    name: str
    func: Callable[[float], float]
    monotonicity: str  # "non-increasing" | "non-decreasing" | "constant"
    limit: float  # declared value of (K/k)'(0+)
    support: float  # mu; must cover the domain diameter
    primitive_closed: Callable[[float], float] | None = None
    primitive_inverse_closed: Callable[[float], float] | None = None

    def __post_init__(self):
        if self.limit <= 0.0 or not np.isfinite(self.limit):
            raise ConfigError(f"kernel limit must lie in (0, inf), got {self.limit:g}")
        if self.monotonicity == "non-decreasing" and self.limit > 1.0 + 1e-12:
            raise ConfigError("non-decreasing kernels have limit in (0, 1]")
        if self.monotonicity == "non-increasing" and self.limit < 1.0 - 1e-12:
            raise ConfigError("non-increasing kernels have limit >= 1")
        if self.monotonicity not in ("non-increasing", "non-decreasing", "constant"):
            raise ConfigError(f"unknown monotonicity {self.monotonicity!r}")

    def __call__(self, s):
        return self.func(s)


def const_kernel(support: float = float("inf")) -> WeightKernel:
    """k = 1: no boundary degeneracy, limit 1."""
    return WeightKernel(
        name="const",
        func=lambda s: np.ones_like(np.asarray(s, dtype=float)),
        monotonicity="constant",
        limit=1.0,
        support=support,
        primitive_closed=lambda s: np.asarray(s, dtype=float),
        primitive_inverse_closed=lambda y: np.asarray(y, dtype=float),
    )


def power_kernel(gamma: float, support: float = float("inf")) -> WeightKernel:
    """k(s) = s**gamma with gamma > -1 (so k is integrable near 0)."""
    if gamma <= -1.0:
        raise ConfigError(f"power kernel needs gamma > -1 for integrability, got {gamma:g}")
    if gamma == 0.0:
        return const_kernel(support)
    mono = "non-decreasing" if gamma > 0.0 else "non-increasing"
    c = gamma + 1.0
    return WeightKernel(
        name=f"power({gamma:g})",
        func=lambda s: np.asarray(s, dtype=float) ** gamma,
        monotonicity=mono,
        limit=1.0 / c,
        support=support,
        primitive_closed=lambda s: np.asarray(s, dtype=float) ** c / c,
        primitive_inverse_closed=lambda y: (c * np.asarray(y, dtype=float)) ** (1.0 / c),
    )


_KERNEL_RE = re.compile(r"^\s*(?:(const)|(power)\s*\(\s*([-+0-9.eE]+)\s*\))\s*$")


def make_kernel(key: str, support: float = float("inf")) -> WeightKernel:
    """Build a named kernel: "const" or "power(gamma)"."""
    m = _KERNEL_RE.match(key)
    if not m:
        raise ConfigError(f"unknown kernel key {key!r} (expected const or power(gamma))")
    if m.group(1):
        return const_kernel(support)
    return power_kernel(float(m.group(3)), support)


def kernel_primitive(kernel: WeightKernel, s: float) -> float:
    """K(s), the primitive of the kernel from 0; strictly increasing."""
    if not 0.0 < s < kernel.support:
        raise DomainError(f"primitive argument must lie in (0, {kernel.support:g}), got {s:g}")
    if kernel.primitive_closed is not None:
        return float(kernel.primitive_closed(s))
    # kernels are integrable near 0 but may be singular there; split off a power tail
    from .quadutil import integral_on_interval

    return integral_on_interval(kernel.func, 0.0, s)


def kernel_primitive_inverse(kernel: WeightKernel, y: float) -> float:
    if kernel.primitive_inverse_closed is not None:
        s = float(kernel.primitive_inverse_closed(y))
        if not 0.0 < s < kernel.support:
            raise DomainError(f"primitive inverse lands outside (0, mu): {s:g}")
        return s
    top = kernel.support * (1.0 - 1e-12)
    if not 0.0 < y < kernel_primitive(kernel, top):
        raise DomainError(f"value {y:g} outside the range of the kernel primitive")
    return float(brentq(lambda s: kernel_primitive(kernel, s) - y, 1e-300, top, rtol=1e-13))


def limit_estimate(kernel: WeightKernel, start: float = 1e-2, rungs: int = 16) -> LadderLimit:
    """Extrapolated limit of (K/k)'(s) as s -> 0+, by central differences.

    Must agree with the declared limit within 1e-3; the ladder (geometric,
    ratio 2) and its last iterates are returned as convergence evidence.
    """

    def ratio_derivative(s: float) -> float:
        h = 0.25 * s
        g = lambda x: kernel_primitive(kernel, x) / float(kernel.func(x))
        return (g(s + h) - g(s - h)) / (2.0 * h)

    ladder = geometric_ladder(start, 0.5, rungs)
    vals = np.array([ratio_derivative(s) for s in ladder])
    if not np.all(np.isfinite(vals)):
        raise NumericsError("limit extrapolation diverged: non-finite samples")
    est = aitken_limit(vals)
    if abs(est.value - kernel.limit) > 1e-3:
        raise NumericsError(
            f"estimated limit {est.value:.6g} disagrees with declared {kernel.limit:g}"
        )
    return est


class BlowupProfile:
    """The decreasing profile whose remaining tail time at height y is t.

    ``tail_time(y)`` evaluates T(y) = integral_y^inf (p' F(s))**(-1/p) ds,
    and ``value(t)`` inverts it.  A pure-power primitive gives closed forms;
    otherwise the tail integral is evaluated by adaptive quadrature with a
    substitution matched to the declared decay index.
    """

    def __init__(self, nl: Nonlinearity, p: float):
        if p <= 1.0:
            raise DomainError(f"p must exceed 1, got {p:g}")
        self.nl = nl
        self.p = float(p)
        self.p_conj = p / (p - 1.0)
        self.decay = (nl.index + 1.0) / p  # integrand ~ s**(-decay)
        if self.decay <= 1.0 + 1e-12:
            raise ConfigError(
                f"tail of F**(-1/p) not integrable for index {nl.index:g}, p = {p:g}"
            )
        if nl.primitive_power is not None:
            coef, expo = nl.primitive_power
            a = expo / p
            self._amp = (self.p_conj * coef) ** (-1.0 / p) / (a - 1.0)
            self._expo = a - 1.0  # T(y) = amp * y**(-expo)
        else:
            self._amp = None
            self._expo = None

    def _integrand(self, s: float) -> float:
        return (self.p_conj * primitive(self.nl, s)) ** (-1.0 / self.p)

    def tail_time(self, y: float) -> float:
        """T(y); strictly decreasing in y."""
        if y <= 0.0:
            raise DomainError(f"profile height must be positive, got {y:g}")
        if self._amp is not None:
            return self._amp * y ** (-self._expo)
        return upper_tail_integral(self._integrand, y, self.decay)

    def value(self, t):
        """phi(t): the unique height whose tail time equals t."""
        arr = np.asarray(t, dtype=float)
        if np.any(arr <= 0.0):
            raise DomainError("profile argument must be positive")
        if self._amp is not None:
            out = (self._amp / arr) ** (1.0 / self._expo)
        else:
            out = np.vectorize(self._invert_scalar)(arr)
        return float(out) if np.isscalar(t) or arr.ndim == 0 else out

    def _invert_scalar(self, t: float) -> float:
        lo, hi = 1.0, 1.0
        # expand the bracket: T decreasing, so T(lo) >= t >= T(hi)
        for _ in range(200):
            if self.tail_time(lo) >= t:
                break
            lo /= 16.0
        else:
            raise NumericsError(f"could not bracket profile value for t = {t:g}")
        for _ in range(200):
            if self.tail_time(hi) <= t:
                break
            hi *= 16.0
        else:
            raise NumericsError(f"could not bracket profile value for t = {t:g}")
        if lo == hi:
            return lo
        # a bracket end can land exactly on the root (nice rational times)
        if abs(self.tail_time(lo) - t) <= 1e-13 * t:
            return lo
        if abs(self.tail_time(hi) - t) <= 1e-13 * t:
            return hi
        return math.exp(
            brentq(lambda L: self.tail_time(math.exp(L)) - t, math.log(lo), math.log(hi), rtol=1e-14)
        )

    def ode_residual(self, t: float, rel_step: float = 1e-4) -> float:
        """Relative defect of -phi' = (p' F(phi))**(1/p), by central differences."""
        h = rel_step * t
        dphi = (self.value(t + h) - self.value(t - h)) / (2.0 * h)
        rhs = (self.p_conj * primitive(self.nl, self.value(t))) ** (1.0 / self.p)
        return abs(dphi + rhs) / rhs


@lru_cache(maxsize=32)
def _profile(nl: Nonlinearity, p: float) -> BlowupProfile:
    return BlowupProfile(nl, p)


def profile_value(nl: Nonlinearity, p: float, t):
    """phi(t) for absorption nl at diffusion exponent p."""
    return _profile(nl, p).value(t)


def profile_inverse(nl: Nonlinearity, p: float, s: float) -> float:
    """The unique t with phi(t) = s (phi is strictly decreasing)."""
    return _profile(nl, p).tail_time(s)


def effective_absorption(nl: Nonlinearity, kernel: WeightKernel, p: float, s):
    """(k o K^{-1} o phi^{-1})(s)**p * f(s): absorption with the kernel folded in."""
    prof = _profile(nl, p)

    def scalar(sv: float) -> float:
        t = prof.tail_time(sv)
        x = kernel_primitive_inverse(kernel, t)
        return float(kernel.func(x)) ** p * float(nl.func(sv))

    arr = np.asarray(s, dtype=float)
    if arr.ndim == 0:
        return scalar(float(arr))
    return np.array([scalar(v) for v in arr])


def index_gate_bound(rho: float, p: float, ell: float) -> float:
    """The lower bound max{1, p-1, p-1-(p-2)/ell} that the growth index must exceed."""
    return max(1.0, p - 1.0, p - 1.0 - (p - 2.0) / ell)


def effective_index(rho: float, p: float, ell: float) -> float:
    """Growth index q = rho - (rho - p + 1)(1 - ell) of the effective absorption."""
    bound = index_gate_bound(rho, p, ell)
    if rho <= bound:
        raise ConfigError(
            f"index gate violated: rho = {rho:g} must exceed max{{1, p-1, p-1-(p-2)/ell}} = {bound:g}"
        )
    q = rho - (rho - p + 1.0) * (1.0 - ell)
    if q <= max(1.0, p - 1.0):
        raise ConfigError(f"derived index q = {q:g} fails q > max{{1, p-1}}")
    return q


@dataclass(frozen=True)
class DecayEvidence:
    """Ratio ladder for the profile/kernel decay check near the boundary."""

    s_values: np.ndarray
    ratios: np.ndarray
    exponent: float
    decreasing: bool

    @property
    def decade_factor(self) -> float:
        """Empirical decrease factor of the ratio per decade of s."""
        logs = np.log10(self.s_values)
        slope = np.polyfit(logs, np.log10(self.ratios), 1)[0]
        return 10.0 ** slope


def profile_decay_ratio(
    kernel: WeightKernel,
    nl: Nonlinearity,
    p: float,
    exponent: float,
    s_values,
) -> DecayEvidence:
    """Evidence that phi(K(s))**(-exponent) / k(s)**p vanishes as s -> 0+.

    The exponent must lie strictly inside (p(1-ell)/(r-1), rho-1), with an
    explicit 1e-9 margin for the open interval.
    """
    r = blowup_order(nl.index, p)
    lo = p * (1.0 - kernel.limit) / (r - 1.0)
    hi = nl.index - 1.0
    margin = 1e-9
    if not (lo + margin < exponent < hi - margin):
        raise ConfigError(
            f"decay exponent {exponent:g} outside admissible window ({lo:g}, {hi:g})"
        )
    s = np.asarray(s_values, dtype=float)
    if np.any(np.diff(s) >= 0.0):
        raise DomainError("s_values must decrease toward 0")
    prof = _profile(nl, p)
    ratios = np.array(
        [prof.value(kernel_primitive(kernel, sv)) ** (-exponent) / float(kernel.func(sv)) ** p for sv in s]
    )
    return DecayEvidence(
        s_values=s,
        ratios=ratios,
        exponent=exponent,
        decreasing=bool(np.all(np.diff(ratios) < 0.0)),
    )


def cap_ceiling(
    nl: Nonlinearity,
    p: float,
    kernel: WeightKernel,
    amplitude,
    d_domain,
    d_mesh,
    dt_first: float | None = None,
    margin: float = 4.0,
) -> float:
    """Cap scale beyond which a capped approximation stops moving on resolved scales.

    On a fixed mesh the capped family has no nodal limit: the flux from the
    capped boundary inflates the first cells like sqrt(cap) forever, an
    excess mode that decays inward like (first-cell distance)/d.  The finite
    counterpart of the infinite-data limit is therefore to raise the cap
    until it dominates the blow-up profile at the first resolved cell (both
    the boundary profile phi and, for evolution problems, the space-free
    curve at the first time step), and stop there.

    ``d_domain`` is the distance to the true boundary (driving the weight),
    ``d_mesh`` the distance to the capped mesh boundary (driving the local
    layer); they differ on shrunken subdomains.
    """
    d_domain = np.atleast_1d(np.asarray(d_domain, dtype=float))
    d_mesh = np.atleast_1d(np.asarray(d_mesh, dtype=float))
    amp = np.broadcast_to(np.atleast_1d(np.asarray(amplitude, dtype=float)), d_domain.shape)
    K = np.array([kernel_primitive(kernel, float(v)) for v in d_domain])
    local = amp ** (1.0 / p) * np.asarray(kernel.func(d_domain), dtype=float) * d_mesh
    arg = np.minimum(K, np.maximum(local, 1e-300))
    prof = _profile(nl, p)
    top = float(np.max(prof.value(arg)))
    if dt_first is not None:
        from .blowdown import BlowdownCurve

        b_min = float(np.min(amp * np.asarray(kernel.func(d_domain), dtype=float) ** p))
        if b_min > 0.0:
            top += BlowdownCurve(nl).value(b_min * dt_first)
    return margin * top


@dataclass(frozen=True)
class AbsorptionWeight:
    """Space-time weight b(x, t) = beta(x, t) * k(d(x))**p.

    ``beta`` is the amplitude relative to the kernel power; ``alpha1`` and
    ``alpha2`` are the declared envelope factors with
    alpha1(t) <= beta(x, t) <= alpha2(t), verified on samples at build time.
    """

    kernel: WeightKernel
    beta: Callable[[np.ndarray, float], np.ndarray]
    alpha1: Callable[[float], float]
    alpha2: Callable[[float], float]

    def amplitude(self, x, t: float):
        return np.asarray(self.beta(np.asarray(x, dtype=float), t), dtype=float)

    def values(self, x, d, t: float, p: float):
        """b at coordinates x with boundary distances d, time t."""
        d = np.asarray(d, dtype=float)
        kp = np.asarray(self.kernel.func(np.maximum(d, 1e-300)), dtype=float) ** p
        return self.amplitude(x, t) * kp


def constant_weight(kernel: WeightKernel, amplitude: float = 1.0) -> AbsorptionWeight:
    a = float(amplitude)
    if a <= 0.0:
        raise ConfigError(f"weight amplitude must be positive, got {a:g}")
    return AbsorptionWeight(
        kernel=kernel,
        beta=lambda x, t: np.full_like(np.asarray(x, dtype=float), a),
        alpha1=lambda t: a,
        alpha2=lambda t: a,
    )


def validated_weight(
    kernel: WeightKernel,
    beta,
    alpha1,
    alpha2,
    x_samples,
    t_samples,
) -> AbsorptionWeight:
    """Build a weight and verify the envelope condition on the given samples."""
    w = AbsorptionWeight(kernel=kernel, beta=beta, alpha1=alpha1, alpha2=alpha2)
    xs = np.asarray(x_samples, dtype=float)
    for t in t_samples:
        amp = w.amplitude(xs, t)
        lo, hi = alpha1(t), alpha2(t)
        if np.any(amp < lo * (1.0 - 1e-12)) or np.any(amp > hi * (1.0 + 1e-12)):
            raise ConfigError(
                f"amplitude escapes its declared envelope at t = {t:g}: "
                f"range [{amp.min():g}, {amp.max():g}] vs [{lo:g}, {hi:g}]"
            )
    return w
