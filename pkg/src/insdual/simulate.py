"""Claim schedules and forward (primal) wealth integration.

Used both to feed experiments and as the independent side of the
reconstruction cross-check: a wealth path produced by the dual solver
should be reproducible, step by step, by the explicit Euler accumulation
below under the same strategy and claims.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import ModelParams

__all__ = ["ClaimSchedule", "poisson_schedule", "integrate_primal"]


@dataclass(frozen=True)
class ClaimSchedule:
    """Arrival times of claims, all of one fixed mark (size).

    source is "deterministic" for hand-given times or "poisson" for a
    seeded draw; seed records the draw when applicable.
    """

    times: np.ndarray
    mark: float
    source: str = "deterministic"
    seed: int | None = None

    def __post_init__(self):
        times = np.array(self.times, dtype=float)
        if times.ndim != 1:
            raise ValueError("simulate: claim times must be a one-dimensional array")
        if np.any(times <= 0.0):
            raise ValueError("simulate: claim times must be strictly positive")
        if times.size > 1 and np.any(np.diff(times) <= 0.0):
            raise ValueError("simulate: claim times must be strictly increasing")
        if self.mark <= 0.0:
            raise ValueError(f"simulate: claim mark must be positive, got {self.mark}")
        if self.source not in ("deterministic", "poisson"):
            raise ValueError(f"simulate: unknown schedule source {self.source!r}")
        times.setflags(write=False)
        object.__setattr__(self, "times", times)

    def write_csv(self, path):
        with open(path, "w", newline="\n") as f:
            f.write("time,mark\n")
            for t in self.times:
                f.write(f"{t:.17g},{self.mark:.17g}\n")


def poisson_schedule(
    intensity: float, horizon: float, seed: int, mark: float = 1.0
) -> ClaimSchedule:
    """Claim times on (0, horizon] drawn with exponential inter-arrivals.

    Uses numpy's seeded default generator (PCG64), so one seed gives the
    same schedule on every platform. horizon = 0 yields an empty schedule.
    """
    if intensity <= 0.0:
        raise ValueError(f"simulate: intensity must be positive, got {intensity}")
    if horizon < 0.0:
        raise ValueError(f"simulate: horizon must be nonnegative, got {horizon}")
    rng = np.random.default_rng(seed)
    times = []
    t = rng.exponential(1.0 / intensity)
    while t <= horizon:
        times.append(t)
        t += rng.exponential(1.0 / intensity)
    return ClaimSchedule(
        times=np.asarray(times, dtype=float), mark=mark, source="poisson", seed=seed
    )


def integrate_primal(theta_path, params: ModelParams, claims, x: float, h_t=None):
    """Euler wealth accumulation under a given strategy and claim schedule.

    theta_path[i] is the claim fraction retained over (t_{i-1}, t_i], on
    the uniform mesh t_i = i * h_t (theta_path[0] is unused); by default
    h_t = params.T / len(theta_path), matching a reconstructed path that
    stops one step short of the horizon. A claim in (t_{i-1}, t_i] acts
    at t_i with the schedule's mark. No positivity is enforced, so a bad
    strategy shows up as negative wealth rather than an error.
    """
    theta = np.asarray(theta_path, dtype=float)
    if theta.ndim != 1 or theta.size < 1:
        raise ValueError("simulate: theta_path must be a nonempty 1-d sequence")
    h = params.T / theta.size if h_t is None else float(h_t)
    if h <= 0.0:
        raise ValueError(f"simulate: step must be positive, got {h}")
    claim_times = np.atleast_1d(
        np.asarray(getattr(claims, "times", claims), dtype=float)
    )
    mark = float(getattr(claims, "mark", params.delta))
    hit = np.zeros(theta.size, dtype=float)
    for t in claim_times:
        idx = int(np.ceil(t / h - 1e-9))
        if 1 <= idx <= theta.size - 1:
            hit[idx] = 1.0
    inc = (params.alpha - params.beta * (1.0 - theta)) * h - theta * mark * hit
    inc[0] = 0.0
    return x + np.cumsum(inc)
