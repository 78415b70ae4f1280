"""Experiment configuration, execution pipeline, and artifact emission.

A configuration is a flat key-value text file with section headers
(``[problem]``, ``[solver]``, ``[verification]``, ``[output]``).  Loading
validates everything at once and reports every violation, not just the
first; in particular the growth-index gate

    rho > max{1, p-1, p-1-(p-2)/ell}

is re-checked against the declared absorption and kernel, since every rate
prediction downstream consumes it.

A run executes the full pipeline: structural-condition checks, the steady
companion problem, the capped evolution ladder (minimal solution), the
shrinking-collar ladder (maximal solution) when needed, and the enabled
rate reports.  Artifacts (CSV tables, a plain-text summary, plot scripts)
are deterministic: the same configuration yields byte-identical files.
"""

from __future__ import annotations

import configparser
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .blowdown import BlowdownCurve
from .elliptic import EllipticProblem, solve_elliptic_blowup
from .errors import ConfigError, DomainError, NumericsError, SolverError
from .geometry import ball, build_graded_mesh, interval
from .karamata import (
    constant_weight,
    effective_absorption,
    index_gate_bound,
    make_kernel,
)
from .nonlinearity import check_conditions, make_nonlinearity
from .parabolic import (
    ParabolicProblem,
    build_time_grid,
    maximal_solution,
    minimal_solution,
)
from .rates import (
    RateReport,
    boundary_rate,
    initial_rate,
    profile_of_distance,
    sandwich_check,
    uniqueness_gap,
)

logger = logging.getLogger(__name__)

KNOWN_CHECKS = ("conditions", "elliptic_rate", "boundary_rate", "initial_rate", "sandwich", "uniqueness")

_SCHEMA = {
    "problem": {
        "domain", "a", "b", "radius", "dimension", "p", "absorption", "kernel",
        "amplitude", "horizon", "t_star", "allow_full_horizon",
    },
    "solver": {
        "n_cells", "mesh_grading", "cap_base", "cap_factor", "cap_margin", "cap_rtol",
        "max_cap_rungs", "eps_start", "eps_factor", "eps_rungs", "n_steps", "time_grading",
    },
    "verification": {
        "checks", "boundary_t0", "initial_window", "pde_rtol", "ode_rtol",
        "sandwich_bounds", "ladder_ratio",
    },
    "output": {"directory"},
}


@dataclass
class ExperimentConfig:
    """Validated experiment description with defaults filled in."""

    # problem
    domain_kind: str = "interval"
    a: float = 0.0
    b: float = 1.0
    radius: float = 1.0
    dimension: int = 2
    p: float = 2.0
    absorption: str = "power(2)"
    kernel: str = "const"
    amplitude: float = 1.0
    horizon: float = 0.5
    t_star: float = 0.25
    allow_full_horizon: bool = False
    # solver
    n_cells: int = 200
    mesh_grading: float = 2.0
    cap_base: float = 10.0
    cap_factor: float = 2.0
    cap_margin: float = 4.0
    cap_rtol: float = 1e-6
    max_cap_rungs: int = 120
    eps_start: float = 0.04
    eps_factor: float = 0.5
    eps_rungs: int = 4
    n_steps: int = 150
    time_grading: float = 2.0
    # verification
    checks: tuple[str, ...] = ("conditions", "elliptic_rate", "boundary_rate", "initial_rate", "sandwich")
    boundary_t0: tuple[float, ...] = (0.1, 0.2)
    initial_window: tuple[float, float] = (1e-3, 1e-1)
    pde_rtol: float = 0.05
    ode_rtol: float = 1e-3
    sandwich_bounds: tuple[float, float] = (1e-3, 1e3)
    ladder_ratio: float = 2.0
    # output
    directory: str = "out"
    name: str = "experiment"


def _parse_floats(text: str) -> tuple[float, ...]:
    return tuple(float(v.strip()) for v in text.split(",") if v.strip())


def load_config(path) -> ExperimentConfig:
    """Parse and validate a configuration file; raise with every violation."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    read = parser.read(path)
    if not read:
        raise ConfigError(f"cannot read configuration file {path}")
    violations: list[str] = []
    for section in parser.sections():
        if section not in _SCHEMA:
            violations.append(f"unknown section [{section}]")
            continue
        for key in parser[section]:
            if key not in _SCHEMA[section]:
                violations.append(f"unknown key {key!r} in [{section}]")

    cfg = ExperimentConfig(name=Path(path).stem)
    get = parser.get

    def take(section, key, conv, attr=None, check=None, describe=""):
        if parser.has_option(section, key):
            raw = get(section, key)
            try:
                val = conv(raw)
            except (ValueError, ConfigError) as exc:
                violations.append(f"[{section}] {key} = {raw!r}: {exc}")
                return
            if check is not None and not check(val):
                violations.append(f"[{section}] {key} = {raw!r}: {describe}")
                return
            setattr(cfg, attr or key, val)

    take("problem", "domain", str, "domain_kind",
         check=lambda v: v in ("interval", "ball"), describe="domain must be interval or ball")
    take("problem", "a", float)
    take("problem", "b", float)
    take("problem", "radius", float, check=lambda v: v > 0, describe="radius must be positive")
    take("problem", "dimension", int, check=lambda v: v >= 2, describe="ball dimension must be >= 2")
    take("problem", "p", float, check=lambda v: v > 1, describe="p must exceed 1")
    take("problem", "absorption", str)
    take("problem", "kernel", str)
    take("problem", "amplitude", float, check=lambda v: v > 0, describe="amplitude must be positive")
    take("problem", "horizon", float, check=lambda v: v > 0, describe="horizon must be positive")
    take("problem", "t_star", float, check=lambda v: v > 0, describe="t_star must be positive")
    take("problem", "allow_full_horizon", lambda s: s.strip().lower() in ("1", "true", "yes"))

    take("solver", "n_cells", int, check=lambda v: v >= 8, describe="need at least 8 cells")
    take("solver", "mesh_grading", float, check=lambda v: v >= 1, describe="grading must be >= 1")
    take("solver", "cap_base", float, check=lambda v: v > 0, describe="cap_base must be positive")
    take("solver", "cap_factor", float, check=lambda v: v > 1, describe="cap_factor must exceed 1")
    take("solver", "cap_margin", float, check=lambda v: v >= 1, describe="cap_margin must be >= 1")
    take("solver", "cap_rtol", float, check=lambda v: 0 < v < 1, describe="cap_rtol in (0,1)")
    take("solver", "max_cap_rungs", int, check=lambda v: v >= 2, describe="need >= 2 rungs")
    take("solver", "eps_start", float, check=lambda v: v > 0, describe="eps_start must be positive")
    take("solver", "eps_factor", float, check=lambda v: 0 < v < 1, describe="eps_factor in (0,1)")
    take("solver", "eps_rungs", int, check=lambda v: v >= 0, describe="eps_rungs must be >= 0")
    take("solver", "n_steps", int, check=lambda v: v >= 4, describe="need at least 4 time steps")
    take("solver", "time_grading", float, check=lambda v: v >= 1, describe="time grading must be >= 1")

    take("verification", "checks", lambda s: tuple(v.strip() for v in s.split(",") if v.strip()))
    take("verification", "boundary_t0", _parse_floats)
    take("verification", "initial_window", _parse_floats,
         check=lambda v: len(v) == 2 and 0 < v[0] < v[1], describe="window must be 0 < lo < hi")
    take("verification", "pde_rtol", float, check=lambda v: v > 0, describe="tolerance must be positive")
    take("verification", "ode_rtol", float, check=lambda v: v > 0, describe="tolerance must be positive")
    take("verification", "sandwich_bounds", _parse_floats,
         check=lambda v: len(v) == 2 and 0 < v[0] < v[1], describe="bounds must be 0 < lo < hi")
    take("verification", "ladder_ratio", float, check=lambda v: v > 1, describe="ladder ratio must exceed 1")

    take("output", "directory", str)

    violations.extend(validate_semantics(cfg))
    if violations:
        raise ConfigError(
            "invalid configuration:\n  " + "\n  ".join(violations), violations=violations
        )
    return cfg


def validate_semantics(cfg: ExperimentConfig) -> list[str]:
    """Cross-field checks, including the growth-index gate."""
    out: list[str] = []
    if cfg.domain_kind == "interval" and not cfg.b > cfg.a:
        out.append(f"interval needs b > a, got ({cfg.a:g}, {cfg.b:g})")
    try:
        nl = make_nonlinearity(cfg.absorption)
    except ConfigError as exc:
        out.append(str(exc))
        nl = None
    try:
        kern = make_kernel(cfg.kernel)
    except ConfigError as exc:
        out.append(str(exc))
        kern = None
    if nl is not None and kern is not None and cfg.p > 1:
        bound = index_gate_bound(nl.index, cfg.p, kern.limit)
        if not nl.index > bound:
            out.append(
                f"index gate violated: growth index {nl.index:g} must exceed "
                f"max{{1, p-1, p-1-(p-2)/ell}} = {bound:g} (p = {cfg.p:g}, ell = {kern.limit:g})"
            )
    limit = cfg.horizon if cfg.allow_full_horizon else 0.9 * cfg.horizon
    if cfg.t_star > limit:
        out.append(
            f"t_star = {cfg.t_star:g} exceeds the solved-window limit {limit:g} "
            "(set allow_full_horizon to solve up to the horizon)"
        )
    for c in cfg.checks:
        if c not in KNOWN_CHECKS:
            out.append(f"unknown verification check {c!r} (known: {', '.join(KNOWN_CHECKS)})")
    for t0 in cfg.boundary_t0:
        if not 0.0 < t0 <= cfg.t_star:
            out.append(f"boundary_t0 = {t0:g} outside the solved window (0, {cfg.t_star:g}]")
    return out


@dataclass
class ExperimentResult:
    name: str
    passed: bool
    reports: list = field(default_factory=list)
    failures: list[str] = field(default_factory=list)
    artifacts: list[str] = field(default_factory=list)


def _build_problem(cfg: ExperimentConfig):
    if cfg.domain_kind == "interval":
        dom = interval(cfg.a, cfg.b)
    else:
        dom = ball(cfg.radius, cfg.dimension)
    mesh = build_graded_mesh(dom, cfg.n_cells, cfg.mesh_grading)
    nl = make_nonlinearity(cfg.absorption)
    # built-in kernels are globally defined; the effective-absorption
    # composition needs them beyond any finite support near the small-s end
    kern = make_kernel(cfg.kernel)
    weight = constant_weight(kern, cfg.amplitude)
    prob = ParabolicProblem(mesh=mesh, p=cfg.p, nl=nl, weight=weight, horizon=cfg.horizon)
    return dom, mesh, nl, kern, weight, prob


def run_experiment(cfg: ExperimentConfig, out_dir=None) -> ExperimentResult:
    """Execute the full pipeline for one configuration.

    Solver errors leave partial artifacts behind and are recorded as
    failures; an assertion that fails marks the experiment failed but never
    aborts the remaining checks.
    """
    out = Path(out_dir if out_dir is not None else cfg.directory)
    out.mkdir(parents=True, exist_ok=True)
    res = ExperimentResult(name=cfg.name, passed=True)
    dom, mesh, nl, kern, weight, prob = _build_problem(cfg)
    summary: list[str] = [f"experiment {cfg.name}"]

    def fail(msg: str):
        res.passed = False
        res.failures.append(msg)
        summary.append("FAIL " + msg)

    def note(msg: str):
        summary.append("ok   " + msg)

    def guarded(label: str, fn):
        """Run one check; failures are recorded, never propagated."""
        try:
            fn()
        except (SolverError, DomainError, NumericsError) as exc:
            fail(f"{label}: {exc}")

    if "conditions" in cfg.checks:
        report = check_conditions(nl, cfg.p)
        if report.all_core:
            note(f"structural conditions hold (measured index {report.measured_index:.4g})")
        else:
            fail(f"structural conditions violated: {report}")

    z_field = None
    if "elliptic_rate" in cfg.checks or "sandwich" in cfg.checks:
        eprob = EllipticProblem(mesh=mesh, p=cfg.p, nl=nl, kernel=kern, amplitude=cfg.amplitude)
        try:
            z_field = solve_elliptic_blowup(
                eprob, cap_base=cfg.cap_base, cap_factor=cfg.cap_factor,
                rtol=cfg.cap_rtol, max_rungs=cfg.max_cap_rungs, margin=cfg.cap_margin)
        except SolverError as exc:
            fail(f"steady companion solve failed: {exc}")
        if z_field is not None:
            _write_solution_csv(out / "solutions.csv", eprob, z_field)
            res.artifacts.append("solutions.csv")
            if "elliptic_rate" in cfg.checks:
                def check_elliptic_rate():
                    rep = boundary_rate(z_field, eprob, rtol=cfg.pde_rtol,
                                        ladder_ratio=cfg.ladder_ratio)
                    rep.name = "steady-" + rep.name
                    res.reports.append(rep)
                    (note if rep.passed else fail)(
                        f"{rep.name}: {rep.extrapolated:.6g} vs {rep.predicted:.6g}")
                guarded("steady boundary rate", check_elliptic_rate)

    needs_parabolic = any(c in cfg.checks for c in ("boundary_rate", "initial_rate", "sandwich", "uniqueness"))
    minimal = maximal = None
    if needs_parabolic:
        times = build_time_grid(cfg.t_star, cfg.n_steps, cfg.time_grading)
        try:
            minimal = minimal_solution(prob, times, cap_base=cfg.cap_base,
                                       cap_factor=cfg.cap_factor, rtol=cfg.cap_rtol,
                                       max_rungs=cfg.max_cap_rungs)
        except SolverError as exc:
            fail(f"minimal solution failed: {exc}")
        wants_maximal = any(c in cfg.checks for c in ("sandwich", "uniqueness"))
        if minimal is not None and wants_maximal:
            if cfg.eps_rungs <= 0:
                fail("sandwich/uniqueness checks need a collar ladder (eps_rungs > 0)")
            else:
                eps = cfg.eps_start * cfg.eps_factor ** np.arange(cfg.eps_rungs)
                try:
                    maximal = maximal_solution(prob, times, eps, cap_base=cfg.cap_base,
                                               cap_factor=cfg.cap_factor, rtol=cfg.cap_rtol,
                                               max_rungs=cfg.max_cap_rungs)
                except SolverError as exc:
                    fail(f"maximal solution failed: {exc}")

    if minimal is not None:
        _write_trajectory_csv(out / "trajectory.csv", prob, minimal)
        res.artifacts.append("trajectory.csv")
        if "boundary_rate" in cfg.checks:
            for t0 in cfg.boundary_t0:
                def check_boundary(t0=t0):
                    rep = boundary_rate(minimal, prob, t0=t0, rtol=cfg.pde_rtol,
                                        ladder_ratio=cfg.ladder_ratio)
                    res.reports.append(rep)
                    (note if rep.passed else fail)(
                        f"{rep.name}: {rep.extrapolated:.6g} vs {rep.predicted:.6g}")
                guarded(f"boundary rate at t = {t0:g}", check_boundary)
        if "initial_rate" in cfg.checks:
            def check_initial():
                rep = initial_rate(minimal, prob, t_window=cfg.initial_window,
                                   rtol=cfg.pde_rtol, ladder_ratio=cfg.ladder_ratio)
                res.reports.append(rep)
                (note if rep.passed else fail)(
                    f"{rep.name}: {rep.extrapolated:.6g} (two-sided: {rep.details['two_sided']})")
            guarded("initial rate", check_initial)
        if "sandwich" in cfg.checks and maximal is not None:
            def check_sandwich():
                sw = sandwich_check(minimal, maximal, prob, t_star=cfg.t_star,
                                    bounds=cfg.sandwich_bounds)
                res.reports.append(sw)
                (note if sw.passed else fail)(
                    f"sandwich ratios in [{sw.inf_lower:.4g}, {sw.sup_upper:.4g}]")
            guarded("sandwich envelopes", check_sandwich)
        if "uniqueness" in cfg.checks and maximal is not None:
            def check_gap():
                gap = uniqueness_gap(minimal, maximal, prob)
                res.reports.append(gap)
                note(f"uniqueness gap {gap.gap:.4g} ({gap.note})")
            guarded("uniqueness gap", check_gap)

    res.artifacts.extend(emit_report(res.reports, out, summary_lines=summary))
    return res


def emit_report(reports, out_dir, summary_lines=()) -> list[str]:
    """Write the deterministic report artifacts: rates.csv, summary.txt, plot script.

    Identical inputs yield byte-identical files; an empty report list still
    produces the header-only table and the summary skeleton.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rate_reports = [r for r in reports if isinstance(r, RateReport)]
    _write_rates_csv(out / "rates.csv", rate_reports)
    lines = list(summary_lines) if summary_lines else ["report"]
    (out / "summary.txt").write_text("\n".join(lines) + "\n")
    _write_plot_script(out / "plot_results.py")
    return ["rates.csv", "summary.txt", "plot_results.py"]


def _fmt(x: float) -> str:
    # 12 significant digits, scientific notation
    return f"{x:.11e}"


def _write_solution_csv(path: Path, prob: EllipticProblem, fld) -> None:
    mesh = prob.mesh
    d = mesh.boundary_distance()
    prof = np.full(mesh.nodes.size, np.nan)
    inner = d > 0.0
    prof[inner] = profile_of_distance(prob.nl, prob.p, prob.kernel, d[inner])
    with open(path, "w") as fh:
        fh.write("x,d,value,profile,ratio\n")
        for i, x in enumerate(mesh.nodes):
            ratio = fld.values[i] / prof[i] if np.isfinite(prof[i]) else float("nan")
            fh.write(",".join(_fmt(v) for v in (x, d[i], fld.values[i], prof[i], ratio)) + "\n")


def _write_trajectory_csv(path: Path, prob: ParabolicProblem, fld) -> None:
    mesh = fld.mesh
    d = mesh.boundary_distance()
    inner = d > 0.0
    prof = np.full(mesh.nodes.size, np.nan)
    prof[inner] = profile_of_distance(prob.nl, prob.p, prob.weight.kernel, d[inner])
    plain = BlowdownCurve(prob.nl)
    kern = prob.weight.kernel
    if kern.monotonicity == "constant":
        eff = plain
    else:
        eff = BlowdownCurve(lambda s: float(effective_absorption(prob.nl, kern, prob.p, s)),
                            index=None if kern.monotonicity == "non-decreasing" else prob.nl.index,
                            name="effective")
    x0 = 0.5 * (mesh.domain.a + mesh.domain.b) if mesh.domain.kind == "interval" else 0.0
    i0 = int(np.argmin(np.abs(mesh.nodes - x0)))
    b0 = float(prob.weight.values(mesh.nodes[i0:i0 + 1], d[i0:i0 + 1], 0.0, prob.p)[0])
    with open(path, "w") as fh:
        fh.write("t,x,d,value,curve_plain,curve_effective,curve_frozen,profile\n")
        for j, t in enumerate(fld.times):
            if t <= 0.0:
                continue
            xi, xis = plain.value(t), eff.value(t)
            tau = plain.value(b0 * t)
            for i, x in enumerate(mesh.nodes):
                fh.write(",".join(_fmt(v) for v in
                                  (t, x, d[i], fld.values[j, i], xi, xis, tau, prof[i])) + "\n")


def _write_rates_csv(path: Path, reports: list[RateReport]) -> None:
    cols = ("name", "predicted", "extrapolated", "rel_error", "tolerance",
            "converged", "passed", "rungs")
    with open(path, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for rep in reports:
            row = rep.row()
            fh.write(",".join(
                row["name"] if c == "name" else
                (str(row[c]) if c in ("converged", "passed", "rungs") else _fmt(row[c]))
                for c in cols) + "\n")


_PLOT_SCRIPT = '''"""Plot the CSV artifacts written next to this script."""
import csv
import pathlib

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

here = pathlib.Path(__file__).parent

sol = here / "solutions.csv"
if sol.exists():
    rows = list(csv.DictReader(open(sol)))
    d = [float(r["d"]) for r in rows if float(r["d"]) > 0]
    ratio = [float(r["ratio"]) for r in rows if float(r["d"]) > 0]
    fig, ax = plt.subplots()
    ax.semilogx(d, ratio, ".")
    ax.set_xlabel("boundary distance d")
    ax.set_ylabel("value / boundary profile")
    fig.savefig(here / "steady_ratio.png", dpi=150)

traj = here / "trajectory.csv"
if traj.exists():
    rows = list(csv.DictReader(open(traj)))
    xs = sorted({float(r["x"]) for r in rows})
    mid = xs[len(xs) // 2]
    t = [float(r["t"]) for r in rows if float(r["x"]) == mid]
    v = [float(r["value"]) for r in rows if float(r["x"]) == mid]
    c = [float(r["curve_frozen"]) for r in rows if float(r["x"]) == mid]
    fig, ax = plt.subplots()
    ax.loglog(t, v, label="solution at midpoint")
    ax.loglog(t, c, "--", label="space-free curve")
    ax.set_xlabel("t")
    ax.legend()
    fig.savefig(here / "initial_layer.png", dpi=150)

print("plots written to", here)
'''


def _write_plot_script(path: Path) -> None:
    path.write_text(_PLOT_SCRIPT)
