"""Dual-side numerical solver for optimal proportional reinsurance.

The package solves, on a compactified mesh, the variational inequality
satisfied by the convex dual of the terminal-utility value function,
then reads the optimal retention strategy and wealth path back off the
solved surface.
"""

from .grid import Grid, build_uniform, project, refine_around
from .howard import (
    REGION_CONTINUATION,
    REGION_OBSTACLE,
    DiscreteSolution,
    HowardNonconvergence,
    StepDiagnostics,
    complementarity_extrema,
    growth_margins,
    solve_backward,
    solve_time_step,
)
from .model import (
    ModelParams,
    compactify,
    conjugate_utility,
    expand,
    inverse_marginal,
    terminal_condition,
    utility,
)
from .policy import (
    PathEscapeError,
    PolicyPath,
    UnreachableWealthError,
    discrete_wealth,
    evolve_path,
    find_initial_state,
    sde_residual,
    wealth_row,
)
from .scheme import (
    ControlSet,
    OperatorTables,
    admissible_control,
    apply_jump_drift_row,
    build_tables,
    jump_target,
    make_control_set,
    minimize_over_controls,
    obstacle_apply,
    obstacle_values,
    operator_values,
    scheme_residual,
    solve_policy_system,
    source_term,
)
from .simulate import ClaimSchedule, integrate_primal, poisson_schedule

__version__ = "0.1.0"

__all__ = [
    "Grid",
    "build_uniform",
    "project",
    "refine_around",
    "REGION_CONTINUATION",
    "REGION_OBSTACLE",
    "DiscreteSolution",
    "HowardNonconvergence",
    "StepDiagnostics",
    "complementarity_extrema",
    "growth_margins",
    "solve_backward",
    "solve_time_step",
    "ModelParams",
    "compactify",
    "conjugate_utility",
    "expand",
    "inverse_marginal",
    "terminal_condition",
    "utility",
    "PathEscapeError",
    "PolicyPath",
    "UnreachableWealthError",
    "discrete_wealth",
    "evolve_path",
    "find_initial_state",
    "sde_residual",
    "wealth_row",
    "ControlSet",
    "OperatorTables",
    "admissible_control",
    "apply_jump_drift_row",
    "build_tables",
    "jump_target",
    "make_control_set",
    "minimize_over_controls",
    "obstacle_apply",
    "obstacle_values",
    "operator_values",
    "scheme_residual",
    "solve_policy_system",
    "source_term",
    "ClaimSchedule",
    "integrate_primal",
    "poisson_schedule",
    "__version__",
]
