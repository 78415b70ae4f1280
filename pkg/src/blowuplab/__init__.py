"""Numerical laboratory for p-Laplacian diffusion with infinite boundary and initial data.

Solutions of  u_t - Delta_p u = -b(x, t) f(u)  that blow up on the parabolic
boundary are built by monotone capped approximation, and their boundary and
initial rates are measured against the predictions of regular-variation
theory: the boundary profile phi(K(d)), the space-free blow-down curves, and
the derived indices r and q.
"""

from .blowdown import BlowdownCurve, equivalence_check, solve_blowdown, two_scale_equivalence
from .elliptic import (
    EllipticProblem,
    GridFunction,
    elliptic_comparison_check,
    solve_elliptic_blowup,
    solve_elliptic_capped,
)
from .errors import ConfigError, DomainError, NumericsError, SolverError
from .geometry import Domain, Mesh, ball, build_graded_mesh, distance_to_boundary, interval
from .karamata import (
    AbsorptionWeight,
    BlowupProfile,
    WeightKernel,
    const_kernel,
    constant_weight,
    effective_absorption,
    effective_index,
    index_gate_bound,
    kernel_primitive,
    kernel_primitive_inverse,
    limit_estimate,
    make_kernel,
    power_kernel,
    profile_decay_ratio,
    profile_inverse,
    profile_value,
)
from .nonlinearity import (
    ConditionReport,
    Nonlinearity,
    blowup_order,
    check_conditions,
    make_nonlinearity,
    power,
    power_log,
    primitive,
    rv_index_estimate,
)
from .parabolic import (
    ParabolicProblem,
    SpaceTimeField,
    CompactTestField,
    build_time_grid,
    maximal_solution,
    minimal_solution,
    parabolic_comparison_check,
    solve_capped,
    step_implicit,
    weak_form_residual,
)
from .experiment import ExperimentConfig, emit_report, load_config, run_experiment
from .rates import (
    GapReport,
    RateReport,
    SandwichReport,
    boundary_rate,
    initial_rate,
    predicted_boundary_constant,
    profile_of_distance,
    sandwich_check,
    uniqueness_gap,
)

__version__ = "0.1.0"
