"""Discrete operator for the dual variational inequality.

One backward time step solves, node by node on the compact state mesh,

    min( v_next[j] - v[j] + h_t * min_rho (A(rho) v + l(rho))[j],
         (B v)[j] ) = 0

where, for a candidate intensity multiplier rho > 0, the stationary part
collects, inside one factor of the arrival intensity pi,

  * the claim-jump difference   v[at jump(rho, s_j)] - v[j],
  * the upwinded drift          (1 - rho) * s_j * (1 - s_j) * Dv
    (forward difference when the drift coefficient is positive, backward
    when negative, so every off-diagonal coefficient stays nonnegative),

plus the discount absorption r * v[j],

l(rho) is the running income rate written in compact coordinates, and B
is the one-sided monotonicity (obstacle) operator, which has no row at
the first interior node.

The value at the jump target is credited by linear interpolation between
the two bracketing mesh nodes (snapping to the nearest node instead
wastes up to half a cell of jump distance while the drift compensator
stays exact, which hands candidates near rho = 1 a spurious first-order
discount and bends the solved surface well below the true one). The
convex weights keep every off-diagonal coefficient nonnegative, so the
scheme stays monotone. Bracketing indices and weights are computed once
per (control, node) pair and cached in OperatorTables.

The last interior node has no upper neighbour; its forward difference
substitutes the ghost value v[m] := v[m-2] over the mirrored spacing.
At the first interior node a negative drift has no lower neighbour and
its contribution is dropped, which keeps the row monotone.

The candidate search at each node is restricted to controls the mesh can
represent: the jump target must not leave the state hull (a clamped
projection silently discards the dominant part of the jump difference,
letting extreme candidates look spuriously cheap and draining the edge
values), and a negative drift is only admitted where the lower neighbour
exists. The identity control rho = 1 is admissible at every node, so the
restricted search is never empty.

With these conventions the implicit matrix I - h_t * A(rho) has positive
diagonal, nonpositive off-diagonals and row sums 1 - h_t * r, hence is
strictly diagonally dominant whenever h_t * r < 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import spsolve

from .grid import Grid
from .model import ModelParams

__all__ = [
    "ControlSet",
    "make_control_set",
    "jump_target",
    "source_term",
    "admissible_control",
    "apply_jump_drift_row",
    "obstacle_apply",
    "minimize_over_controls",
    "scheme_residual",
    "OperatorTables",
    "build_tables",
    "operator_values",
    "obstacle_values",
    "solve_policy_system",
]


@dataclass(frozen=True)
class ControlSet:
    """Finite ladder of candidate intensity multipliers rho > 0."""

    candidates: np.ndarray

    def __post_init__(self):
        cand = np.array(self.candidates, dtype=float)
        if cand.ndim != 1 or cand.size == 0:
            raise ValueError("scheme: control set must hold at least one candidate")
        if np.any(cand <= 0.0):
            raise ValueError("scheme: control candidates must be positive")
        if np.any(np.diff(cand) <= 0.0):
            raise ValueError("scheme: control candidates must be strictly increasing")
        cand.setflags(write=False)
        object.__setattr__(self, "candidates", cand)


def make_control_set(
    params: ModelParams, low: float = 1e-3, high: float = 1e3, count: int = 101
) -> ControlSet:
    """Geometric candidate ladder plus the two structurally special values.

    The identity control rho = 1 (claims kept as they come) and the
    premium kink beta / (delta * pi_intensity), where the running income
    rate loses its positive part, are always inserted; candidates of the
    geometric ladder that collide with them within 1e-9 relative are
    dropped in their favour.
    """
    if not 0.0 < low < high:
        raise ValueError(f"scheme: need 0 < low < high, got [{low}, {high}]")
    if count < 2:
        raise ValueError(f"scheme: control count must be >= 2, got {count}")
    base = np.geomspace(low, high, count)
    special = [1.0]
    kink = params.beta / (params.delta * params.pi_intensity)
    if kink > 0.0 and not np.isclose(kink, 1.0, rtol=1e-9, atol=0.0):
        special.append(kink)
    special = np.asarray(special, dtype=float)
    fresh = base[~np.any(np.isclose(base[:, None], special[None, :], rtol=1e-9, atol=0.0), axis=1)]
    return ControlSet(np.unique(np.concatenate([fresh, special])))


def jump_target(state, rho):
    """Image of a compact state under y -> rho * y, in compact coordinates.

    Equals compactify(rho * expand(state)) = rho*s / (1 + s*(rho - 1)).
    """
    return rho * state / (1.0 + state * (rho - 1.0))


def source_term(params: ModelParams, state, rho):
    """Running income rate l(state, rho) in compact coordinates.

    expand(state) * (alpha - beta + (beta - rho*delta*pi_intensity)_+);
    the positive part is the premium refund of ceding above the kink.
    """
    surplus = params.alpha - params.beta + np.maximum(
        params.beta - rho * params.delta * params.pi_intensity, 0.0
    )
    return state / (1.0 - state) * surplus


def admissible_control(grid: Grid, j: int, rho: float) -> bool:
    """Whether the candidate search at node j may consider this control.

    Requires the jump target to stay inside the state hull and, at the
    first node, a nonnegative drift (there is no lower neighbour for the
    backward difference). rho = 1 passes at every node.
    """
    s = grid.states
    if not 0 <= j < s.size:
        raise IndexError(f"scheme: node index {j} outside the stored mesh")
    target = jump_target(s[j], rho)
    if not s[0] <= target <= s[-1]:
        return False
    return not (j == 0 and rho > 1.0)


def apply_jump_drift_row(v, grid: Grid, j: int, rho: float, params: ModelParams):
    """Stationary operator row at node j for one control.

    Returns pi * (v at jump target - v[j] + upwinded drift difference)
    plus the discount absorption r * v[j], the jump value interpolated
    between the bracketing nodes (targets outside the hull, which only an
    inadmissible candidate produces, credit the hull end). Linear in v
    for fixed (j, rho).
    """
    s = grid.states
    m = s.size
    if not 0 <= j < m:
        raise IndexError(f"scheme: node index {j} outside the stored mesh")
    if rho <= 0.0:
        raise ValueError(f"scheme: control must be positive, got {rho}")
    tgt = min(max(jump_target(s[j], rho), s[0]), s[-1])
    lo = int(np.searchsorted(s, tgt, side="right")) - 1
    if lo >= m - 1:
        credit = v[m - 1]
    else:
        frac = (tgt - s[lo]) / (s[lo + 1] - s[lo])
        credit = (1.0 - frac) * v[lo] + frac * v[lo + 1]
    b = (1.0 - rho) * (1.0 - s[j]) * s[j]
    if b > 0.0:
        if j == m - 1:
            dv = (v[m - 2] - v[m - 1]) / (s[m - 1] - s[m - 2])
        else:
            dv = (v[j + 1] - v[j]) / (s[j + 1] - s[j])
    elif b < 0.0 and j >= 1:
        dv = (v[j] - v[j - 1]) / (s[j] - s[j - 1])
    else:
        dv = 0.0
    return params.pi_intensity * (credit - v[j] + b * dv) + params.r * v[j]


def obstacle_apply(v, grid: Grid, j: int):
    """One-sided monotonicity expression (v[j-1] - v[j]) / (s_j - s_{j-1}).

    Nonnegative wherever the surface is nonincreasing. The operator has
    no row at the first interior node.
    """
    if j < 1:
        raise ValueError("scheme: the obstacle operator has no row at the first node")
    s = grid.states
    if j >= s.size:
        raise IndexError(f"scheme: node index {j} outside the stored mesh")
    return (v[j - 1] - v[j]) / (s[j] - s[j - 1])


def minimize_over_controls(
    v_next, v, grid: Grid, j: int, params: ModelParams, controls: ControlSet
):
    """Best admissible candidate at node j and its h_t-scaled stationary value.

    Scans every candidate passing admissible_control, returning
    (rho_star, h_t * (A(rho_star) v + l(rho_star))[j]); exact ties
    resolve to the smallest candidate. ``v_next`` is accepted for
    signature symmetry with the time-coupled residual; the minimized
    quantity is the stationary part only.
    """
    cand = controls.candidates
    if cand.size == 0:
        raise ValueError("scheme: empty control set")
    best_rho, best_val = None, np.inf
    for rho in cand:
        if not admissible_control(grid, j, rho):
            continue
        val = apply_jump_drift_row(v, grid, j, rho, params) + source_term(
            params, grid.states[j], rho
        )
        if val < best_val:
            best_rho, best_val = float(rho), val
    if best_rho is None:
        raise ValueError(f"scheme: no admissible candidate at node {j}")
    return best_rho, grid.h_t * float(best_val)


def scheme_residual(
    surface, grid: Grid, i: int, j: int, params: ModelParams, controls: ControlSet
):
    """Pointwise complementarity residual of a solved surface.

    min of the time-coupled stationary part and the obstacle expression;
    at the first interior node only the stationary part exists. Both
    arguments vanish to solver tolerance on a converged surface. The
    terminal layer carries data, not equations, so i must be < n_steps.
    """
    if not 0 <= i < grid.n_steps:
        raise IndexError(
            f"scheme: residual defined for time layers 0..{grid.n_steps - 1}, got {i}"
        )
    v = surface[i]
    v_next = surface[i + 1]
    _, hmin = minimize_over_controls(v_next, v, grid, j, params, controls)
    pde = v_next[j] - v[j] + hmin
    if j == 0:
        return pde
    return min(pde, obstacle_apply(v, grid, j))


# ---------------------------------------------------------------------------
# vectorized tables used by the policy-iteration solver


@dataclass(frozen=True)
class OperatorTables:
    """Per (control, node) coefficients cached for one grid and model."""

    controls: np.ndarray  # (K,)
    jump_lo: np.ndarray  # (K, m) lower bracketing node of the jump target
    jump_hi: np.ndarray  # (K, m) upper bracketing node (== lo at the top)
    jump_frac: np.ndarray  # (K, m) weight on jump_hi, in [0, 1)
    drift: np.ndarray  # (K, m) signed drift coefficient
    drift_pos: np.ndarray  # (K, m) positive part
    drift_neg: np.ndarray  # (K, m) negative part (<= 0)
    source: np.ndarray  # (K, m) running income rate
    admissible: np.ndarray  # (K, m) admissible_control per pair
    h_plus: np.ndarray  # (m,) forward spacings, mirrored in the last slot
    h_minus: np.ndarray  # (m,) backward spacings, first slot unused


def build_tables(grid: Grid, params: ModelParams, controls: ControlSet) -> OperatorTables:
    s = grid.states
    m = s.size
    rho = controls.candidates[:, None]
    target = rho * s[None, :] / (1.0 + s[None, :] * (rho - 1.0))
    drift = (1.0 - rho) * ((1.0 - s) * s)[None, :]
    admissible = (target >= s[0]) & (target <= s[-1])
    admissible[:, 0] &= controls.candidates <= 1.0
    tgt = np.clip(target, s[0], s[-1])
    jump_lo = np.clip(np.searchsorted(s, tgt, side="right") - 1, 0, m - 1)
    jump_hi = np.minimum(jump_lo + 1, m - 1)
    span = np.where(jump_hi > jump_lo, s[jump_hi] - s[jump_lo], 1.0)
    jump_frac = np.where(jump_hi > jump_lo, (tgt - s[jump_lo]) / span, 0.0)
    surplus = params.alpha - params.beta + np.maximum(
        params.beta - rho * params.delta * params.pi_intensity, 0.0
    )
    source = (s / (1.0 - s))[None, :] * surplus
    h_plus = np.empty_like(s)
    h_plus[:-1] = np.diff(s)
    h_plus[-1] = s[-1] - s[-2]
    h_minus = np.empty_like(s)
    h_minus[1:] = np.diff(s)
    h_minus[0] = h_plus[0]
    return OperatorTables(
        controls=controls.candidates,
        jump_lo=jump_lo,
        jump_hi=jump_hi,
        jump_frac=jump_frac,
        drift=drift,
        drift_pos=np.maximum(drift, 0.0),
        drift_neg=np.minimum(drift, 0.0),
        source=source,
        admissible=admissible,
        h_plus=h_plus,
        h_minus=h_minus,
    )


def operator_values(v, grid: Grid, params: ModelParams, tables: OperatorTables):
    """(K, m) array of (A(rho) v + l(rho))[j] for every candidate and node.

    Inadmissible (candidate, node) pairs are reported as +inf so they
    never win the minimization.
    """
    dplus = np.empty_like(v)
    dplus[:-1] = (v[1:] - v[:-1]) / tables.h_plus[:-1]
    dplus[-1] = (v[-2] - v[-1]) / tables.h_plus[-1]
    dminus = np.zeros_like(v)
    dminus[1:] = (v[1:] - v[:-1]) / tables.h_minus[1:]
    credit = (1.0 - tables.jump_frac) * v[tables.jump_lo] + tables.jump_frac * v[tables.jump_hi]
    out = (
        params.pi_intensity
        * (credit - v[None, :] + tables.drift_pos * dplus[None, :]
           + tables.drift_neg * dminus[None, :])
        + params.r * v[None, :]
        + tables.source
    )
    out[~tables.admissible] = np.inf
    return out


def obstacle_values(v, grid: Grid):
    """(m,) obstacle expressions, with +inf at the row-less first node."""
    out = np.empty_like(v)
    out[0] = np.inf
    out[1:] = (v[:-1] - v[1:]) / np.diff(grid.states)
    return out


def solve_policy_system(
    v_next,
    grid: Grid,
    params: ModelParams,
    tables: OperatorTables,
    kstar,
    region,
):
    """Solve one mixed policy-evaluation system.

    Rows outside ``region`` impose (I - h_t A(rho_j)) v = v_next + h_t l;
    rows inside impose the obstacle equality v[j] = v[j-1] (no coupling
    to the later time layer). The first node must never sit in ``region``
    so the system stays nonsingular.
    """
    s = grid.states
    m = s.size
    ht = grid.h_t
    if ht * params.r >= 1.0:
        raise ValueError(
            f"scheme: time step h_t={ht} too large for discount r={params.r}; "
            "need h_t * r < 1 for diagonal dominance"
        )
    if region[0]:
        raise ValueError("scheme: the first node has no obstacle row")
    ar = np.arange(m)
    b = tables.drift[kstar, ar]
    jlo = tables.jump_lo[kstar, ar]
    jhi = tables.jump_hi[kstar, ar]
    jfr = tables.jump_frac[kstar, ar]
    src = tables.source[kstar, ar]
    pde = ~np.asarray(region, dtype=bool)
    pi = params.pi_intensity

    rows, cols, vals = [], [], []

    idx = np.where(pde)[0]
    rows.append(idx)
    cols.append(idx)
    vals.append(np.full(idx.size, 1.0 - ht * params.r + ht * pi))
    rows.append(idx)
    cols.append(jlo[idx])
    vals.append(-ht * pi * (1.0 - jfr[idx]))
    rows.append(idx)
    cols.append(jhi[idx])
    vals.append(-ht * pi * jfr[idx])

    up = np.where(pde & (b > 0.0))[0]
    ucol = np.where(up == m - 1, m - 2, up + 1)
    rows.append(up)
    cols.append(up)
    vals.append(ht * pi * b[up] / tables.h_plus[up])
    rows.append(up)
    cols.append(ucol)
    vals.append(-ht * pi * b[up] / tables.h_plus[up])

    dn = np.where(pde & (b < 0.0) & (ar > 0))[0]
    rows.append(dn)
    cols.append(dn)
    vals.append(-ht * pi * b[dn] / tables.h_minus[dn])
    rows.append(dn)
    cols.append(dn - 1)
    vals.append(ht * pi * b[dn] / tables.h_minus[dn])

    obs = np.where(~pde)[0]
    rows.append(obs)
    cols.append(obs)
    vals.append(-1.0 / tables.h_minus[obs])
    rows.append(obs)
    cols.append(obs - 1)
    vals.append(1.0 / tables.h_minus[obs])

    matrix = sparse.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(m, m),
    ).tocsr()
    rhs = np.where(pde, v_next + ht * src, 0.0)
    return spsolve(matrix, rhs)
