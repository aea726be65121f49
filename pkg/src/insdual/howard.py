"""Backward solve of the discrete variational inequality by policy iteration.

Each time layer is a stationary complementarity system in the unknown row
v, given the already-solved later row v_next. The iteration alternates

  improvement   pick, per node, the candidate control minimizing the
                stationary operator value, then split nodes into the
                continuation set (stationary part <= obstacle at the
                current iterate, ties included) and the obstacle set
                (strictly larger);

  evaluation    solve the mixed linear system that enforces the chosen
                rows exactly: implicit operator rows on the continuation
                set, v[j] = v[j-1] on the obstacle set.

The loop stops when the (control, partition) pair repeats, at which point
the evaluated row is an exact fixed point of its own improvement and the
complementarity conditions hold to linear-solver precision. A sup-norm
change at or below ``tol`` that persists without the pair stabilizing is
accepted after a few sweeps and flagged in the step diagnostics.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import Grid
from .model import ModelParams, conjugate_utility, expand, terminal_condition
from .scheme import (
    ControlSet,
    OperatorTables,
    build_tables,
    obstacle_values,
    operator_values,
    solve_policy_system,
)

__all__ = [
    "REGION_CONTINUATION",
    "REGION_OBSTACLE",
    "StepDiagnostics",
    "DiscreteSolution",
    "HowardNonconvergence",
    "solve_time_step",
    "solve_backward",
    "complementarity_extrema",
    "growth_margins",
]

REGION_CONTINUATION = 0
REGION_OBSTACLE = 1

# consecutive sub-tol sweeps accepted when the policy keeps dithering
_SOFT_STOP_SWEEPS = 5


class HowardNonconvergence(RuntimeError):
    """Raised when a layer finishes neither by policy stability nor the value rule."""

    def __init__(self, message, time_index, change_history, last_iterate):
        super().__init__(message)
        self.time_index = time_index
        self.change_history = change_history
        self.last_iterate = last_iterate


@dataclass
class StepDiagnostics:
    time_index: int | None
    iterations: int
    final_change: float
    policy_stable: bool
    change_history: tuple = ()


@dataclass
class DiscreteSolution:
    """Converged surface with its per-layer controls and region labels.

    surface      (n_steps + 1, m); the last row is the terminal data
    control      (n_steps, m) minimizing candidate per non-terminal node
    region       (n_steps, m), REGION_CONTINUATION or REGION_OBSTACLE
    diagnostics  one StepDiagnostics per time layer, in time order
    """

    grid: Grid
    params: ModelParams
    controls: ControlSet
    surface: np.ndarray
    control: np.ndarray
    region: np.ndarray
    diagnostics: list = field(default_factory=list)


def solve_time_step(
    v_next,
    grid: Grid,
    params: ModelParams,
    controls: ControlSet,
    tol: float = 1e-9,
    max_iter: int = 200,
    tables: OperatorTables | None = None,
    use_obstacle: bool = True,
    time_index: int | None = None,
):
    """One backward layer: returns (v, control_row, region_row, diagnostics).

    Warm starts from v_next. Raises HowardNonconvergence with the change
    history and last iterate if max_iter sweeps finish without the stop
    rule firing.
    """
    if tables is None:
        tables = build_tables(grid, params, controls)
    m = grid.n_nodes
    ht = grid.h_t
    ar = np.arange(m)
    v_next = np.asarray(v_next, dtype=float)
    v = v_next.copy()
    prev_sig = None
    changes: list[float] = []
    soft = 0
    for it in range(1, max_iter + 1):
        values = operator_values(v, grid, params, tables)
        kstar = np.argmin(values, axis=0)
        stationary = v_next - v + ht * values[kstar, ar]
        if use_obstacle:
            region = stationary > obstacle_values(v, grid)
            region[0] = False
        else:
            region = np.zeros(m, dtype=bool)
        sig = kstar.tobytes() + region.tobytes()
        if sig == prev_sig:
            # evaluating again would reproduce v bit for bit
            diag = StepDiagnostics(
                time_index, it, changes[-1] if changes else 0.0, True, tuple(changes)
            )
            return v, tables.controls[kstar], region, diag
        v_new = solve_policy_system(v_next, grid, params, tables, kstar, region)
        if not np.all(np.isfinite(v_new)):
            raise HowardNonconvergence(
                f"howard: policy evaluation produced non-finite values at "
                f"time index {time_index}",
                time_index,
                changes,
                v,
            )
        change = float(np.max(np.abs(v_new - v)))
        changes.append(change)
        v = v_new
        prev_sig = sig
        soft = soft + 1 if change <= tol else 0
        if change == 0.0 or soft >= _SOFT_STOP_SWEEPS:
            diag = StepDiagnostics(
                time_index, it, change, change == 0.0, tuple(changes)
            )
            return v, tables.controls[kstar], region, diag
    raise HowardNonconvergence(
        f"howard: no convergence within {max_iter} iterations at time index "
        f"{time_index}; last sup-change {changes[-1]:.3e}",
        time_index,
        changes,
        v,
    )


def solve_backward(
    grid: Grid,
    params: ModelParams,
    controls: ControlSet,
    tol: float = 1e-9,
    max_iter: int = 200,
) -> DiscreteSolution:
    """Full backward sweep from the terminal layer to time zero."""
    if grid.h_t * params.r >= 1.0:
        raise ValueError(
            f"howard: h_t * r = {grid.h_t * params.r} must stay below 1"
        )
    tables = build_tables(grid, params, controls)
    n = grid.n_steps
    m = grid.n_nodes
    surface = np.empty((n + 1, m))
    surface[n] = terminal_condition(params, grid.states)
    control = np.empty((n, m))
    region = np.empty((n, m), dtype=np.uint8)
    diags: list[StepDiagnostics] = []
    for i in range(n - 1, -1, -1):
        v, rho_row, region_row, diag = solve_time_step(
            surface[i + 1],
            grid,
            params,
            controls,
            tol=tol,
            max_iter=max_iter,
            tables=tables,
            time_index=i,
        )
        surface[i] = v
        control[i] = rho_row
        region[i] = region_row
        diags.append(diag)
    diags.reverse()
    return DiscreteSolution(
        grid=grid,
        params=params,
        controls=controls,
        surface=surface,
        control=control,
        region=region,
        diagnostics=diags,
    )


def complementarity_extrema(solution: DiscreteSolution):
    """Worst complementarity residuals over every non-terminal node.

    Returns (lowest_argument, largest_minimum): the smallest value either
    argument of the pointwise minimum takes anywhere, and the largest
    value the minimum itself takes. A converged surface keeps both within
    a few linear-solver epsilons of zero.
    """
    grid = solution.grid
    params = solution.params
    tables = build_tables(grid, params, solution.controls)
    ht = grid.h_t
    lowest = np.inf
    largest = -np.inf
    for i in range(grid.n_steps):
        v = solution.surface[i]
        stationary = (
            solution.surface[i + 1]
            - v
            + ht * operator_values(v, grid, params, tables).min(axis=0)
        )
        obstacle = obstacle_values(v, grid)
        lowest = min(lowest, stationary.min(), obstacle[1:].min())
        largest = max(largest, np.minimum(stationary, obstacle).max())
    return float(lowest), float(largest)


def growth_margins(solution: DiscreteSolution, band=(0.05, 0.95)):
    """Worst slack of the linear-in-y growth envelope over a state band.

    The undiscounted surface must sit between conjugate_utility(y) plus
    (alpha - beta) * y * (T - t) from below and plus the same with the
    ceding refund (beta - delta*pi)_+ added from above. Returns
    (below_lower, above_upper), each the largest violation found; values
    <= 0 mean the corresponding bound holds everywhere on the band.
    """
    grid = solution.grid
    params = solution.params
    mask = (grid.states >= band[0]) & (grid.states <= band[1])
    if not mask.any():
        raise ValueError(f"howard: no mesh nodes inside the band {band}")
    y = expand(grid.states[mask])
    base = conjugate_utility(params, y)
    k_upper = params.alpha - params.beta + max(
        params.beta - params.delta * params.pi_intensity, 0.0
    )
    k_lower = params.alpha - params.beta
    below = -np.inf
    above = -np.inf
    for i in range(grid.n_steps + 1):
        remaining = params.T - grid.times[i]
        u = np.exp(params.r * grid.times[i]) * solution.surface[i][mask]
        below = max(below, np.max(base + k_lower * y * remaining - u))
        above = max(above, np.max(u - (base + k_upper * y * remaining)))
    return float(below), float(above)
