"""Empirical rate extraction and comparison against the predicted constants.

Every report pairs a predicted constant with a ladder of measured ratios on
a geometric ladder (in boundary distance d or in time t), an extrapolated
limit (iterated Aitken on the log-ladder, which annihilates the dominant
geometric error mode of both the continuum approach and the discretization),
and a convergence flag.  A ladder whose final iterates do not settle is
marked non-converged rather than silently passed.

Tolerances: PDE-measured constants default to 5% relative (discretization
error dominates), ODE/quadrature-measured quantities to 1e-3.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .blowdown import BlowdownCurve
from .elliptic import EllipticProblem, GridFunction
from .errors import DomainError
from .extrapolation import aitken_limit
from .karamata import WeightKernel, effective_absorption, kernel_primitive, profile_value
from .nonlinearity import Nonlinearity, blowup_order
from .parabolic import ParabolicProblem, SpaceTimeField

logger = logging.getLogger(__name__)

PDE_RTOL = 0.05
ODE_RTOL = 1e-3


@dataclass
class RateReport:
    """Measured vs predicted asymptotic constant with extrapolation evidence."""

    name: str
    predicted: float | None
    abscissae: np.ndarray
    ratios: np.ndarray
    extrapolated: float
    tolerance: float
    converged: bool
    passed: bool
    method: str = "iterated-aitken/log-ladder"
    details: dict = field(default_factory=dict)

    @property
    def rel_error(self) -> float | None:
        if self.predicted is None or self.predicted == 0.0:
            return None
        return abs(self.extrapolated - self.predicted) / abs(self.predicted)

    def row(self) -> dict:
        return {
            "name": self.name,
            "predicted": self.predicted if self.predicted is not None else float("nan"),
            "extrapolated": self.extrapolated,
            "rel_error": self.rel_error if self.rel_error is not None else float("nan"),
            "tolerance": self.tolerance,
            "converged": int(self.converged),
            "passed": int(self.passed),
            "rungs": int(self.abscissae.size),
        }


def predicted_boundary_constant(rho: float, p: float, ell: float, beta: float) -> float:
    """((r + ell - 1) / (r * beta)) ** ((r-1)/p) with r = (rho+1)/(rho+1-p)."""
    r = blowup_order(rho, p)
    return ((r + ell - 1.0) / (r * beta)) ** ((r - 1.0) / p)


def profile_of_distance(nl: Nonlinearity, p: float, kernel: WeightKernel, d) -> np.ndarray:
    """phi(K(d)) nodewise: the boundary-layer comparison profile."""
    d = np.atleast_1d(np.asarray(d, dtype=float))
    K = np.array([kernel_primitive(kernel, float(v)) for v in d])
    return np.asarray(profile_value(nl, p, K))


def _distance_ladder(distances, h_local, d_hi, d_lo, ratio=2.0, rel_width=0.35):
    """Indices of nodes closest to a geometric distance ladder, coarse to fine.

    Nodes whose local spacing exceeds ``rel_width`` of their distance are
    dropped: their ratio samples carry O((h/d)^2) noise that is no longer a
    clean geometric mode.
    """
    order = np.argsort(distances)
    ds = distances[order]
    hs = h_local[order]
    idx = []
    target = d_hi
    while target >= d_lo * 0.999:
        j = int(np.argmin(np.abs(ds - target)))
        if hs[j] <= rel_width * ds[j] and (not idx or order[j] != idx[-1]):
            idx.append(order[j])
        target /= ratio
    # ladder was built coarse -> fine; keep it that way but deduplicate
    seen, out = set(), []
    for i in idx:
        if i not in seen:
            seen.add(i)
            out.append(i)
    return out


def _local_spacing(nodes: np.ndarray) -> np.ndarray:
    h = np.empty_like(nodes)
    dh = np.diff(nodes)
    h[0] = dh[0]
    h[-1] = dh[-1]
    h[1:-1] = np.maximum(dh[:-1], dh[1:])
    return h


def boundary_rate(
    fld,
    prob,
    t0: float | None = None,
    side: str = "right",
    d_window: tuple[float, float] | None = None,
    rtol: float = PDE_RTOL,
    ladder_ratio: float = 2.0,
) -> RateReport:
    """Extrapolated limit of u / phi(K(d)) along nodes approaching the boundary.

    ``fld`` is a space-time trajectory (then ``t0`` selects the slice) or a
    steady grid function.  The prediction is ((r+ell-1)/(r*beta))**((r-1)/p)
    with beta the weight amplitude at the chosen boundary point.
    """
    mesh, values, t_used = _slice_field(fld, t0)
    nl, p, kernel, beta = _problem_data(prob, side, t_used)
    dom = mesh.domain
    d_all = mesh.boundary_distance()
    h_all = _local_spacing(mesh.nodes)

    if dom.kind == "interval":
        mid = 0.5 * (dom.a + dom.b)
        mask = mesh.nodes > mid if side == "right" else mesh.nodes < mid
    else:
        mask = np.ones(mesh.nodes.size, dtype=bool)
    mask[list(mesh.boundary_idx)] = False
    mask &= np.isfinite(values)
    cand = np.nonzero(mask)[0]
    if cand.size < 5:
        raise DomainError("too few near-boundary nodes; refine the mesh grading")

    half = 0.5 * dom.diameter if dom.kind == "interval" else dom.radius
    if d_window is None:
        d_hi, d_lo = 0.25 * half, 0.0
    else:
        d_lo, d_hi = d_window
    picks = _distance_ladder(d_all[cand], h_all[cand], d_hi, max(d_lo, d_all[cand].min()),
                             ratio=ladder_ratio)
    picks = [cand[i] for i in picks]
    if len(picks) < 4:
        raise DomainError(
            "fewer than 4 usable ladder rungs near the boundary; refine the mesh grading"
        )
    d_ladder = d_all[picks]
    ratios = values[picks] / profile_of_distance(nl, p, kernel, d_ladder)
    lim = aitken_limit(ratios)

    ell = kernel.limit
    predicted = predicted_boundary_constant(nl.index, p, ell, beta)
    rel = abs(lim.value - predicted) / abs(predicted)
    converged = _credible(lim, rtol)
    return RateReport(
        name=f"boundary-rate[{side}{'' if t_used is None else f', t={t_used:g}'}]",
        predicted=predicted,
        abscissae=d_ladder,
        ratios=ratios,
        extrapolated=lim.value,
        tolerance=rtol,
        converged=converged,
        passed=bool(converged and rel <= rtol),
        details={"iterates": lim.iterates.tolist(), "uncertainty": lim.uncertainty,
                 "beta": beta, "ell": ell, "t0": t_used},
    )


def _credible(lim, rtol: float) -> bool:
    """Extrapolation evidence must resolve the constant at the claimed tolerance."""
    return bool(lim.converged and lim.uncertainty <= 0.5 * rtol * max(abs(lim.value), 1e-30))


def _slice_field(fld, t0):
    if isinstance(fld, SpaceTimeField):
        if t0 is None:
            raise DomainError("a trajectory needs an evaluation time t0")
        j, vals = fld.slice_at(t0)
        return fld.mesh, vals, float(fld.times[j])
    if isinstance(fld, GridFunction):
        return fld.mesh, fld.values, None
    raise DomainError(f"unsupported field type {type(fld).__name__}")


def _problem_data(prob, side, t_used):
    if isinstance(prob, ParabolicProblem):
        dom = prob.mesh.domain
        y = (dom.b if side == "right" else dom.a) if dom.kind == "interval" else dom.radius
        t_eval = 0.0 if t_used is None else t_used
        beta = float(np.asarray(prob.weight.amplitude(np.array([y]), t_eval))[0])
        return prob.nl, prob.p, prob.weight.kernel, beta
    if isinstance(prob, EllipticProblem):
        dom = prob.mesh.domain
        y = (dom.b if side == "right" else dom.a) if dom.kind == "interval" else dom.radius
        amp = prob.amplitude(np.array([y]))[0] if callable(prob.amplitude) else prob.amplitude
        return prob.nl, prob.p, prob.kernel, float(amp)
    raise DomainError(f"unsupported problem type {type(prob).__name__}")


def initial_rate(
    fld: SpaceTimeField,
    prob: ParabolicProblem,
    x0: float | None = None,
    t_window: tuple[float, float] = (1e-3, 1e-1),
    rtol: float = PDE_RTOL,
    ladder_ratio: float = 2.0,
) -> RateReport:
    """Extrapolated limit of u(x0, t) / tau(t) as t -> 0 at an interior point.

    tau is the blow-down curve of b(x0, 0) * f.  The two-sided limit 1 is
    asserted only when p > 2N/(N+2) and f(s)/s is increasing; otherwise only
    the upper bound (limit <= 1) is checked.
    """
    mesh = fld.mesh
    dom = mesh.domain
    if x0 is None:
        x0 = 0.5 * (dom.a + dom.b) if dom.kind == "interval" else 0.0
    i0 = fld.node_index(x0)
    d_all = mesh.boundary_distance()
    if d_all[i0] < 0.25 * d_all.max():
        raise DomainError(
            f"evaluation point x0 = {x0:g} sits in the boundary layer; pick a deeper point"
        )

    b0 = float(prob.weight.values(np.array([mesh.nodes[i0]]), np.array([d_all[i0]]), 0.0, prob.p)[0])
    tau = BlowdownCurve(lambda u: b0 * float(prob.nl.func(u)), index=prob.nl.index, name="frozen-coefficient")

    t_lo, t_hi = t_window
    picks: list[int] = []
    target = t_hi
    while target >= t_lo * 0.999:
        j = int(np.argmin(np.abs(fld.times - target)))
        if j > 0 and (not picks or picks[-1] != j):
            picks.append(j)
        target /= ladder_ratio
    if len(picks) < 4:
        raise DomainError("time grid too coarse in the requested early-time window")
    t_ladder = fld.times[picks]
    ratios = np.array([fld.values[j, i0] / tau.value(fld.times[j]) for j in picks])
    lim = aitken_limit(ratios)

    dim = dom.dimension if dom.kind == "ball" else 1
    gate_p = prob.p > 2.0 * dim / (dim + 2.0)
    grid = np.geomspace(1e-3, 1e6, 48)
    fv = np.asarray(prob.nl.func(grid), dtype=float)
    gate_f = bool(np.all(np.diff(fv / grid) >= -1e-12 * np.maximum(fv[1:] / grid[1:], 1.0)))
    two_sided = gate_p and gate_f

    converged = _credible(lim, rtol)
    if two_sided:
        passed = bool(converged and abs(lim.value - 1.0) <= rtol)
    else:
        passed = bool(converged and lim.value <= 1.0 + rtol)
    return RateReport(
        name=f"initial-rate[x0={mesh.nodes[i0]:g}]",
        predicted=1.0,
        abscissae=t_ladder,
        ratios=ratios,
        extrapolated=lim.value,
        tolerance=rtol,
        converged=converged,
        passed=passed,
        details={
            "iterates": lim.iterates.tolist(),
            "uncertainty": lim.uncertainty,
            "two_sided": two_sided,
            "frozen_coefficient": b0,
            "upper_bound_only": not two_sided,
        },
    )


@dataclass
class SandwichReport:
    """Boundedness of both envelope ratios over the solved grid."""

    sup_upper: float
    inf_lower: float
    bounds: tuple[float, float]
    t_star: float
    passed: bool
    details: dict = field(default_factory=dict)


def _envelope_curves(prob: ParabolicProblem):
    """Space-free curves for the two envelope branches.

    The branch pairing follows the kernel's monotonicity: a non-increasing
    kernel bounds the maximal solution with the plain curve and the minimal
    one with the effective curve; a non-decreasing kernel swaps them.  For a
    constant kernel the effective absorption equals the absorption and both
    branches coincide.
    """
    nl, p, kernel = prob.nl, prob.p, prob.weight.kernel
    plain = BlowdownCurve(nl)
    if kernel.monotonicity == "constant":
        return plain, plain
    eff = BlowdownCurve(
        lambda s: float(effective_absorption(nl, kernel, p, s)),
        index=None if kernel.monotonicity == "non-decreasing" else nl.index,
        name="effective",
    )
    if kernel.monotonicity == "non-increasing":
        return plain, eff  # (upper branch, lower branch)
    return eff, plain


def sandwich_check(
    lower_fld: SpaceTimeField,
    upper_fld: SpaceTimeField,
    prob: ParabolicProblem,
    t_star: float,
    bounds: tuple[float, float] = (1e-3, 1e3),
) -> SandwichReport:
    """sup(upper/envelope) and inf(lower/envelope) over the grid up to t_star.

    Both envelope ratios must stay inside ``bounds``: the envelopes are the
    space-free curve (plain or effective, per the kernel's monotonicity)
    plus the boundary profile phi(K(d)).
    """
    mesh = lower_fld.mesh
    up_curve, lo_curve = _envelope_curves(prob)
    tmask = (lower_fld.times > 0.0) & (lower_fld.times <= t_star)
    times = lower_fld.times[tmask]
    interior = mesh.interior_idx
    d = mesh.boundary_distance()[interior]
    prof = profile_of_distance(prob.nl, prob.p, prob.weight.kernel, d)

    up_env = np.array([up_curve.value(t) for t in times])[:, None] + prof[None, :]
    lo_env = np.array([lo_curve.value(t) for t in times])[:, None] + prof[None, :]

    u_up = upper_fld.values[tmask][:, interior]
    u_lo = lower_fld.values[tmask][:, interior]
    ok_up = np.isfinite(u_up)
    ok_lo = np.isfinite(u_lo)
    trusted = upper_fld.meta.get("trusted_region")
    if trusted is not None:
        ok_up &= trusted[tmask][:, interior]
    trusted = lower_fld.meta.get("trusted_region")
    if trusted is not None:
        ok_lo &= trusted[tmask][:, interior]
    if not (np.any(ok_up) and np.any(ok_lo)):
        raise DomainError("no trusted nodes left below t_star for the envelope check")
    sup_upper = float(np.max(np.where(ok_up, u_up / up_env, -np.inf)))
    inf_lower = float(np.min(np.where(ok_lo, u_lo / lo_env, np.inf)))

    passed = bool(bounds[0] <= inf_lower and sup_upper <= bounds[1] and sup_upper > 0.0)
    return SandwichReport(
        sup_upper=sup_upper,
        inf_lower=inf_lower,
        bounds=bounds,
        t_star=t_star,
        passed=passed,
        details={"times": (float(times[0]), float(times[-1])), "n_interior": int(interior.size)},
    )


@dataclass
class GapReport:
    """Relative spread between the maximal and minimal fields on a core region."""

    gap: float
    asserted: bool
    note: str
    details: dict = field(default_factory=dict)


def uniqueness_gap(
    lower_fld: SpaceTimeField,
    upper_fld: SpaceTimeField,
    prob: ParabolicProblem | None = None,
    core_distance: float | None = None,
    t_min: float | None = None,
) -> GapReport:
    """max (upper - lower)/lower over a fixed interior core.

    The core (default: distance >= 10% of the diameter, t >= 10% of the
    horizon) is held fixed under refinement so the collar of the shrunken
    domains leaves the measurement.  Uniqueness is asserted only under the
    hypotheses p = 2, constant kernel, convex absorption; otherwise the gap
    is still reported but flagged as not asserted.
    """
    mesh = lower_fld.mesh
    d = mesh.boundary_distance()
    if core_distance is None:
        core_distance = 0.1 * mesh.domain.diameter
    if t_min is None:
        t_min = 0.1 * float(lower_fld.times[-1])
    nmask = d >= core_distance
    tmask = lower_fld.times >= t_min
    lo = lower_fld.values[np.ix_(tmask, nmask)]
    up = upper_fld.values[np.ix_(tmask, nmask)]
    both = np.isfinite(lo) & np.isfinite(up) & (lo > 0.0)
    trusted = upper_fld.meta.get("trusted_region")
    if trusted is not None:
        both &= trusted[np.ix_(tmask, nmask)]
    if not np.any(both):
        raise DomainError("no shared valid nodes in the core region")
    gap = float(np.max((up[both] - lo[both]) / lo[both]))

    asserted = False
    note = "uniqueness not asserted by the theory for these hypotheses"
    if prob is not None:
        convex = _is_convex(prob.nl)
        if prob.p == 2.0 and prob.weight.kernel.monotonicity == "constant" and convex:
            asserted = True
            note = "uniqueness hypotheses hold (p = 2, constant kernel, convex absorption)"
    return GapReport(
        gap=gap,
        asserted=asserted,
        note=note,
        details={"core_distance": core_distance, "t_min": t_min, "n_shared": int(both.sum())},
    )


def _is_convex(nl: Nonlinearity) -> bool:
    grid = np.geomspace(1e-3, 1e6, 48)
    fv = np.asarray(nl.func(grid), dtype=float)
    second = fv[2:] - 2.0 * fv[1:-1] + fv[:-2]
    return bool(np.all(second >= -1e-10 * np.maximum(np.abs(fv[1:-1]), 1.0)))
