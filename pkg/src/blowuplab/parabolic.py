"""The evolution problem  u_t - Delta_p u + b(x,t) f(u) = 0  with infinite data.

Infinite initial and lateral data are approached exactly as the theory
constructs them:

* minimal solution -- solve with data u = n on the whole parabolic boundary
  (initial slice and lateral sides), then send the cap n to infinity along a
  doubling ladder until the interior stabilizes;

* maximal solution -- for a shrinking collar parameter eps, solve the minimal
  problem on the subdomain of points farther than eps from the boundary,
  starting at the first grid time past eps, then send eps to 0.  Shrunken
  domains reuse the base mesh nodes (the grading toward the true boundary
  already resolves the collar layers), so fields stay nodally comparable.

Time stepping is backward Euler: unconditionally monotone, which is what the
comparison-based oracles need; accuracy is recovered downstream by
extrapolation in the rate harness.  Time grids are graded toward t = 0 (like
t_j ~ j**2) because the solution enters like the blow-down curve ~ t**(-1/(rho-1)).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .discretize import Discretization, newton_solve
from .elliptic import core_interior_idx
from .errors import DomainError, SolverError
from .geometry import Mesh, distance_to_boundary, interval, ball
from .karamata import AbsorptionWeight, cap_ceiling
from .nonlinearity import Nonlinearity

logger = logging.getLogger(__name__)

DEFAULT_CAP_BASE = 10.0
DEFAULT_CAP_FACTOR = 2.0
DEFAULT_CAP_RTOL = 1e-6
DEFAULT_MAX_RUNGS = 120
MAX_STEP_HALVINGS = 10


@dataclass(frozen=True)
class ParabolicProblem:
    """Problem data; caps/ladders are supplied to the solve operations.

    ``source`` and ``dirichlet`` exist for manufactured-solution runs;
    ``no_flux`` replaces all Dirichlet rows by zero-flux ends (spatially
    homogeneous sanity mode).
    """

    mesh: Mesh
    p: float
    nl: Nonlinearity
    weight: AbsorptionWeight
    horizon: float = 1.0
    source: Callable | None = None      # source(x, t) on the right-hand side
    dirichlet: Callable | None = None   # dirichlet(x, t) boundary data
    initial: Callable | None = None     # initial(x) profile (default: the cap)
    no_flux: bool = False

    def __post_init__(self):
        if self.p <= 1.0:
            raise DomainError(f"p must exceed 1, got {self.p:g}")
        if self.horizon <= 0.0:
            raise DomainError(f"horizon must be positive, got {self.horizon:g}")

    def weight_on(self, nodes: np.ndarray, t: float) -> np.ndarray:
        d = distance_to_boundary(self.mesh.domain, nodes)
        return self.weight.values(nodes, d, t, self.p)

    def source_on(self, nodes: np.ndarray, t: float):
        if self.source is None:
            return None
        return np.asarray(self.source(nodes, t), dtype=float)


@dataclass
class SpaceTimeField:
    """Trajectory on a mesh x time grid; NaN marks nodes/times a shrunken solve
    never covered."""

    mesh: Mesh
    times: np.ndarray
    values: np.ndarray  # shape (n_times, n_nodes)
    meta: dict = field(default_factory=dict)

    def slice_at(self, t: float) -> tuple[int, np.ndarray]:
        j = int(np.argmin(np.abs(self.times - t)))
        return j, self.values[j]

    def node_index(self, x: float) -> int:
        return int(np.argmin(np.abs(self.mesh.nodes - x)))


def build_time_grid(t_end: float, n_steps: int, grading: float = 2.0, t_start: float = 0.0) -> np.ndarray:
    """Times t_start + (t_end-t_start)*(j/n)**grading, graded toward the start."""
    if n_steps < 1 or t_end <= t_start:
        raise DomainError("need n_steps >= 1 and t_end > t_start")
    s = np.linspace(0.0, 1.0, n_steps + 1)
    return t_start + (t_end - t_start) * s ** grading


def step_implicit(prob: ParabolicProblem, state: np.ndarray, dt: float, t_new: float,
                  cap: float | None = None) -> np.ndarray:
    """One backward-Euler step on the problem's own mesh (convenience wrapper)."""
    disc = _discretization(prob, prob.mesh)
    return _step(prob, prob.mesh, disc, state, dt, t_new, cap)


def _discretization(prob: ParabolicProblem, mesh: Mesh) -> Discretization:
    didx = np.array([], dtype=int) if prob.no_flux else None
    return Discretization.build(mesh, prob.p, dirichlet_idx=didx)


def _dirichlet_values(prob: ParabolicProblem, mesh: Mesh, t: float, cap: float | None):
    if prob.no_flux:
        return None
    if prob.dirichlet is not None:
        vals = np.zeros(mesh.nodes.size)
        b = list(mesh.boundary_idx)
        vals[b] = np.asarray(prob.dirichlet(mesh.nodes[b], t), dtype=float)
        return vals
    if cap is None:
        raise DomainError("capped solve requires a cap value")
    return float(cap)


def _step(prob, mesh, disc, state, dt, t_new, cap, guess=None, depth: int = 0) -> np.ndarray:
    """Backward-Euler step with rejection: on Newton failure the step is halved
    (bounded recursion) so the caller's time grid is preserved."""
    weight = prob.weight_on(mesh.nodes, t_new)
    src = prob.source_on(mesh.nodes, t_new)
    dval = _dirichlet_values(prob, mesh, t_new, cap)
    u0 = state if guess is None else guess
    try:
        u, _ = newton_solve(disc, u0, weight=weight, f=prob.nl.func, fp=prob.nl.deriv,
                            source=src, mass_coef=1.0 / dt, u_prev=state,
                            dirichlet_val=dval)
        return u
    except SolverError:
        if depth >= MAX_STEP_HALVINGS:
            raise
        t_mid = t_new - 0.5 * dt
        half = _step(prob, mesh, disc, state, 0.5 * dt, t_mid, cap, depth=depth + 1)
        return _step(prob, mesh, disc, half, 0.5 * dt, t_new, cap, depth=depth + 1)


def _march(prob: ParabolicProblem, mesh: Mesh, times: np.ndarray, cap: float | None,
           warm: np.ndarray | None = None) -> np.ndarray:
    """Full backward-Euler trajectory with data ``cap`` on the parabolic boundary."""
    disc = _discretization(prob, mesh)
    n = mesh.nodes.size
    out = np.empty((times.size, n))
    if prob.initial is not None:
        out[0] = np.asarray(prob.initial(mesh.nodes), dtype=float)
    elif prob.dirichlet is not None:
        raise DomainError("dirichlet data requires an explicit initial profile")
    else:
        out[0] = cap
    for j in range(1, times.size):
        dt = times[j] - times[j - 1]
        guess = None
        if warm is not None:
            guess = np.maximum(out[j - 1], warm[j])
        out[j] = _step(prob, mesh, disc, out[j - 1], dt, times[j], cap, guess=guess)
    return out


def solve_capped(prob: ParabolicProblem, times, cap: float) -> SpaceTimeField:
    """Trajectory of the problem with data u = cap on the parabolic boundary."""
    times = np.asarray(times, dtype=float)
    if cap <= 0.0:
        raise DomainError(f"cap must be positive, got {cap:g}")
    values = _march(prob, prob.mesh, times, cap)
    return SpaceTimeField(mesh=prob.mesh, times=times, values=values,
                          meta={"cap": cap, "kind": "capped"})


def _cap_ladder(prob, mesh, times, cap_base, cap_factor, rtol, max_rungs,
                margin=4.0, collar=4):
    """Raise the boundary cap until the core interior stabilizes or the cap
    passes the resolved layer scale (profile at the first cell plus the
    space-free curve at the first time step); see ``cap_ceiling``."""
    core = core_interior_idx(mesh, collar)
    interior = mesh.interior_idx
    d_mesh = mesh.boundary_distance()[interior]
    d_dom = distance_to_boundary(prob.mesh.domain, mesh.nodes)[interior]
    amp = np.asarray(prob.weight.amplitude(mesh.nodes[interior], float(times[1])), dtype=float)
    ceiling = cap_ceiling(prob.nl, prob.p, prob.weight.kernel, amp, d_dom, d_mesh,
                          dt_first=float(times[1] - times[0]), margin=margin)
    cap = cap_base
    prev = None
    deltas = []
    for rung in range(max_rungs):
        cur = _march(prob, mesh, times, cap, warm=prev)
        if prev is not None:
            body_new = cur[1:][:, core]
            body_old = prev[1:][:, core]
            rel = np.abs(body_new - body_old) / np.maximum(np.abs(body_new), 1e-300)
            delta = float(np.max(rel))
            deltas.append(delta)
            if delta < rtol or cap >= ceiling:
                return cur, {"cap_rungs": rung + 1, "final_cap": cap, "cap_ceiling": ceiling,
                             "interior_delta": delta, "delta_history": deltas, "collar": collar}
        prev = cur
        cap *= cap_factor
    raise SolverError(
        "cap ladder exhausted without reaching its ceiling",
        {"rungs": max_rungs, "last_cap": cap / cap_factor, "ceiling": ceiling,
         "delta_history": deltas[-5:]},
    )


def minimal_solution(prob: ParabolicProblem, times, cap_base: float = DEFAULT_CAP_BASE,
                     cap_factor: float = DEFAULT_CAP_FACTOR, rtol: float = DEFAULT_CAP_RTOL,
                     max_rungs: int = DEFAULT_MAX_RUNGS) -> SpaceTimeField:
    """Limit of capped solutions as the cap grows: the minimal solution."""
    times = np.asarray(times, dtype=float)
    values, meta = _cap_ladder(prob, prob.mesh, times, cap_base, cap_factor, rtol, max_rungs)
    meta["kind"] = "minimal"
    logger.info("minimal solution: %d cap rungs to %.3g", meta["cap_rungs"], meta["final_cap"])
    return SpaceTimeField(mesh=prob.mesh, times=times, values=values, meta=meta)


def _shrunken_slice(mesh: Mesh, eps: float) -> slice:
    d = mesh.boundary_distance()
    keep = np.nonzero(d >= eps)[0]
    if mesh.domain.kind == "ball":
        keep = np.concatenate(([0], keep)) if 0 not in keep else keep
        lo, hi = 0, int(keep.max())
    else:
        lo, hi = int(keep.min()), int(keep.max())
    if hi - lo < 4:
        raise DomainError(f"collar eps = {eps:g} leaves fewer than 5 nodes")
    return slice(lo, hi + 1)


def _sub_mesh(mesh: Mesh, sl: slice) -> Mesh:
    nodes = mesh.nodes[sl]
    if mesh.domain.kind == "interval":
        dom = interval(float(nodes[0]), float(nodes[-1]))
    else:
        dom = ball(float(nodes[-1]), mesh.domain.dimension)
    return Mesh(domain=dom, nodes=nodes, grading=mesh.grading)


def maximal_solution(prob: ParabolicProblem, times, eps_values,
                     cap_base: float = DEFAULT_CAP_BASE, cap_factor: float = DEFAULT_CAP_FACTOR,
                     rtol: float = DEFAULT_CAP_RTOL, max_rungs: int = DEFAULT_MAX_RUNGS,
                     stop_rtol: float | None = None) -> SpaceTimeField:
    """Limit over shrinking collars of minimal solutions on subdomains.

    For each eps the minimal problem is solved on the base-mesh nodes farther
    than eps from the boundary, starting at the first grid time past eps; the
    collar then shrinks until interior values agree on the common region.
    The returned field is NaN where the last collar never reached; its meta
    records the trusted region (the previous collar), where values are
    converged in eps.
    """
    times = np.asarray(times, dtype=float)
    eps_values = np.asarray(eps_values, dtype=float)
    if np.any(np.diff(eps_values) >= 0.0) or np.any(eps_values <= 0.0):
        raise DomainError("eps ladder must be positive and strictly decreasing")
    stop_rtol = rtol * 10.0 if stop_rtol is None else stop_rtol

    full_shape = (times.size, prob.mesh.nodes.size)
    embeds: list[np.ndarray] = []
    regions: list[np.ndarray] = []
    used = []
    for eps in eps_values:
        sl = _shrunken_slice(prob.mesh, eps)
        j0 = int(np.searchsorted(times, eps, side="left"))
        if j0 > times.size - 3:
            raise DomainError(f"collar eps = {eps:g} leaves fewer than 3 time levels")
        sub = _sub_mesh(prob.mesh, sl)
        sub_times = times[j0:]
        vals, meta = _cap_ladder(prob, sub, sub_times, cap_base, cap_factor, rtol, max_rungs)
        embed = np.full(full_shape, np.nan)
        embed[j0:, sl] = vals
        region = np.zeros(full_shape, dtype=bool)
        region[j0 + 1:, sl] = True
        region[:, sl.stop - 1] = False
        if prob.mesh.domain.kind == "interval":
            region[:, sl.start] = False
        embeds.append(embed)
        regions.append(region)
        if len(embeds) > 2:
            embeds.pop(0)
            regions.pop(0)
        used.append((float(eps), meta["cap_rungs"]))
        if len(embeds) == 2:
            common = regions[0] & regions[1]
            num = float(np.max(np.abs(embeds[1][common] - embeds[0][common])))
            top = float(np.max(np.abs(embeds[1][common])))
            if num < stop_rtol * top:
                break
    # values within the final collar are not converged in eps: trust only the
    # previous rung's region
    meta = {
        "kind": "maximal",
        "eps_ladder": used,
        "eps_final": used[-1][0],
        "trusted_region": regions[0] if len(regions) == 2 else regions[-1],
    }
    return SpaceTimeField(mesh=prob.mesh, times=times, values=embeds[-1], meta=meta)


@dataclass(frozen=True)
class ParabolicComparison:
    """Verdict of the discrete parabolic comparison check."""

    ordered: bool
    max_violation: float
    upper_residual_ok: bool
    lower_residual_ok: bool
    data_ok: bool

    @property
    def passed(self) -> bool:
        return self.ordered and self.upper_residual_ok and self.lower_residual_ok and self.data_ok


def parabolic_comparison_check(upper: SpaceTimeField, lower: SpaceTimeField,
                               prob: ParabolicProblem, tol: float = 1e-8,
                               residual_slack: float = 1e-8) -> ParabolicComparison:
    """Discrete comparison oracle: ordered parabolic-boundary data and correctly
    signed step residuals must yield nodally ordered fields."""
    if not np.array_equal(upper.times, lower.times):
        raise DomainError("comparison requires a shared time grid")
    if not np.array_equal(upper.mesh.nodes, lower.mesh.nodes):
        raise DomainError("comparison requires a shared mesh")
    disc = _discretization(prob, upper.mesh)

    def worst_scaled_residual(fld: SpaceTimeField) -> np.ndarray:
        worst = np.zeros(fld.mesh.nodes.size)
        worst_neg = np.zeros(fld.mesh.nodes.size)
        for j in range(1, fld.times.size):
            dt = fld.times[j] - fld.times[j - 1]
            w = prob.weight_on(fld.mesh.nodes, fld.times[j])
            src = prob.source_on(fld.mesh.nodes, fld.times[j])
            R, scale = disc.residual(fld.values[j], weight=w, f=prob.nl.func,
                                     fp=prob.nl.deriv, source=src, mass_coef=1.0 / dt,
                                     u_prev=fld.values[j - 1])
            s = R / (1.0 + scale)
            worst = np.maximum(worst, s)
            worst_neg = np.minimum(worst_neg, s)
        out = np.stack([worst, worst_neg])
        out[:, list(fld.mesh.boundary_idx)] = 0.0
        return out

    up = worst_scaled_residual(upper)
    lo = worst_scaled_residual(lower)
    upper_ok = bool(np.all(up[1] >= -residual_slack))   # upper solution: residual >= 0
    lower_ok = bool(np.all(lo[0] <= residual_slack))    # lower solution: residual <= 0

    b = list(upper.mesh.boundary_idx)
    data_ok = bool(
        np.all(upper.values[:, b] >= lower.values[:, b] - 1e-12 * np.abs(upper.values[:, b]))
        and np.all(upper.values[0] >= lower.values[0] - 1e-12 * np.abs(upper.values[0]))
    )

    both = np.isfinite(upper.values) & np.isfinite(lower.values)
    scale = np.maximum(np.maximum(np.abs(upper.values), np.abs(lower.values)), 1.0)
    viol = np.where(both, (lower.values - upper.values) / scale, -np.inf)
    violation = float(np.max(viol))
    return ParabolicComparison(
        ordered=violation <= tol,
        max_violation=max(violation, 0.0),
        upper_residual_ok=upper_ok,
        lower_residual_ok=lower_ok,
        data_ok=data_ok,
    )


@dataclass(frozen=True)
class CompactTestField:
    """Nonnegative space-time test function vanishing near the parabolic boundary."""

    phi: Callable  # phi(x, t)
    phi_t: Callable

    def sample(self, nodes: np.ndarray, times: np.ndarray):
        P = np.array([[float(self.phi(x, t)) for x in nodes] for t in times])
        Pt = np.array([[float(self.phi_t(x, t)) for x in nodes] for t in times])
        return P, Pt


def weak_form_residual(field: SpaceTimeField, prob: ParabolicProblem, test: CompactTestField) -> float:
    """Weak-form defect of a trajectory against an admissible test function.

    Quadrature is the right-endpoint rule in time and dual-cell/face sums in
    space, so the defect of an exact solution sampled on the grid decays like
    O(h^2 + dt).  The test function must vanish on the first time slice and
    on the boundary nodes plus their first interior neighbours.
    """
    mesh, times, u = field.mesh, field.times, field.values
    disc = Discretization.build(mesh, prob.p)
    P, Pt = test.sample(mesh.nodes, times)
    if np.any(P < -1e-14):
        raise DomainError("test function must be nonnegative")
    first_layer = set()
    for bidx in mesh.boundary_idx:
        first_layer.add(bidx)
        first_layer.add(bidx + 1 if bidx == 0 else bidx - 1)
    layer = sorted(first_layer)
    if np.any(P[0] != 0.0) or np.any(P[:, layer] != 0.0):
        raise DomainError("test function must vanish on the first time slice and boundary layer")

    V = disc.volumes
    total = float(np.sum(V * u[-1] * P[-1]))
    eps = disc.eps_reg if prob.p != 2.0 else 0.0
    for j in range(1, times.size):
        dt = times[j] - times[j - 1]
        du = np.diff(u[j]) / disc.h_face
        dphi = np.diff(P[j]) / disc.h_face
        if prob.p == 2.0:
            q = du
        else:
            q = (du * du + eps * eps) ** ((prob.p - 2.0) / 2.0) * du
        flux_term = float(np.sum(disc.m_face * disc.h_face * q * dphi))
        w = prob.weight_on(mesh.nodes, times[j])
        absorb = w * np.asarray(prob.nl.func(u[j]), dtype=float)
        src = prob.source_on(mesh.nodes, times[j])
        if src is not None:
            absorb = absorb - src
        absorb_term = float(np.sum(V * absorb * P[j]))
        time_term = float(np.sum(V * u[j] * Pt[j]))
        total += dt * (flux_term + absorb_term - time_term)
    return total
