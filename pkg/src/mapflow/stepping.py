"""Explicit time stepping shared by all solvers.

Schemes: forward Euler and Heun (RK2), with the metric refreshed at every
stage.  The step size obeys dt <= cfl / (lam_max(g^{-1}) * sum_i h_i^{-2}),
re-evaluated each step, which keeps the step operator monotone (nonnegative
coefficients, row sums one) so discrete maximum principles hold exactly.
"""

from dataclasses import dataclass

import numpy as np

from .errors import UnstableStep
from .geometry import lap_coeffs

_DT_FLOOR = 1e-13


@dataclass(frozen=True)
class StepperSettings:
    scheme: str = "rk2"  # "rk2" (Heun) or "euler"
    cfl: float = 0.2

    def __post_init__(self):
        if self.scheme not in ("rk2", "euler"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if not 0.0 < self.cfl <= 0.25:
            raise ValueError("cfl must lie in (0, 0.25] for a monotone step")


class CoeffCache:
    """Laplacian coefficients by time; static families are built once."""

    def __init__(self, metric, grid):
        self.metric = metric
        self.grid = grid
        self._static = None
        self._recent = {}

    def at(self, t):
        if self.metric.static:
            if self._static is None:
                self._static = lap_coeffs(self.metric, self.grid, 0.0)
            return self._static
        c = self._recent.get(t)
        if c is None:
            c = lap_coeffs(self.metric, self.grid, t)
            if len(self._recent) > 4:
                self._recent.clear()
            self._recent[t] = c
        return c


def stable_dt(coeffs, grid, settings, zeroth_sup=0.0):
    """Largest admissible step at the current metric values."""
    denom = coeffs.lam_max * sum(1.0 / (h * h) for h in grid.spacing)
    dt = settings.cfl / denom
    if zeroth_sup > 0.0:
        dt = min(dt, settings.cfl / zeroth_sup)
    if dt < _DT_FLOOR:
        raise UnstableStep(f"stable step collapsed to {dt:.3e}")
    return dt


def euler_step(u, t, dt, rhs, stage_post=None):
    out = u + dt * rhs(t, u)
    if stage_post is not None:
        out = stage_post(out, t + dt)
    return out


def heun_step(u, t, dt, rhs, stage_post=None):
    k1 = rhs(t, u)
    u1 = u + dt * k1
    if stage_post is not None:
        u1 = stage_post(u1, t + dt)
    k2 = rhs(t + dt, u1)
    out = u + (0.5 * dt) * (k1 + k2)
    if stage_post is not None:
        out = stage_post(out, t + dt)
    return out


def advance(u, t0, t1, rhs, dt_fn, settings, stage_post=None, on_step=None):
    """Integrate du/dt = rhs(t, u) from t0 to t1; lands on t1 exactly.

    The number of steps and every stage time are pure functions of
    (t0, t1, dt_fn), so a run split at an output time reproduces an unsplit
    run bit for bit.
    """
    step = heun_step if settings.scheme == "rk2" else euler_step
    t = t0
    nsteps = 0
    while t1 - t > 1e-14 * max(1.0, abs(t1)):
        dt = min(dt_fn(t), t1 - t)
        u = step(u, t, dt, rhs, stage_post)
        t = t1 if t1 - (t + dt) <= 1e-14 * max(1.0, abs(t1)) else t + dt
        nsteps += 1
        if not np.all(np.isfinite(u)):
            raise UnstableStep(f"non-finite values after step to t={t:.6g}")
        if on_step is not None:
            on_step(t, u, dt)
    return u, nsteps


def integrate_with_outputs(u0, t0, out_times, rhs, dt_fn, settings, stage_post=None):
    """Values at each requested output time (first entry may equal t0)."""
    out_times = [float(t) for t in out_times]
    if any(b <= a for a, b in zip(out_times, out_times[1:])):
        raise ValueError("output times must be strictly increasing")
    u = np.array(u0, dtype=float, copy=True)
    t = t0
    series = []
    for t_out in out_times:
        if t_out < t0 - 1e-14:
            raise ValueError("output time precedes the start time")
        if t_out > t:
            u, _ = advance(u, t, t_out, rhs, dt_fn, settings, stage_post)
            t = t_out
        series.append(u.copy())
    return series


def output_times(t0, t1, n_outputs):
    """n_outputs times strictly inside (t0, t1], evenly spaced, ending at t1."""
    if n_outputs < 1:
        raise ValueError("need at least one output time")
    return [t0 + (t1 - t0) * (k + 1) / n_outputs for k in range(n_outputs)]
