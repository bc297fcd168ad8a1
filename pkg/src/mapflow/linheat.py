"""Linear heat equations under evolving metrics, with sup/gradient checks.

Solves (d/dt - Lap_{g(t)}) u = F with explicit Euler/RK2 stepping under the
monotone CFL policy, then verifies the discrete sup bounds, gradient-growth
ratios and the generalized maximum principle on the computed series.
"""

from dataclasses import dataclass

import numpy as np

from .errors import NotASupersolution
from .geometry import build_snapshot, grad_norm_sq, laplace_beltrami
from .grid import ScalarField, check_same_grid
from .report import BoundsEntry
from .stepping import CoeffCache, StepperSettings, integrate_with_outputs, output_times, stable_dt


@dataclass
class LinearHeatProblem:
    """One initial-value problem for the scalar heat operator."""

    metric: object
    grid: object
    forcing: object = None       # None, array (static in t), or callable(mesh, t) -> array
    init: object = None          # None (zero) or ScalarField
    window: tuple = None         # (t0, t1); defaults to (0, metric.T)
    settings: StepperSettings = StepperSettings()

    def __post_init__(self):
        if self.window is None:
            self.window = (0.0, self.metric.T)
        t0, t1 = self.window
        if not 0.0 <= t0 < t1 <= self.metric.T + 1e-12:
            raise ValueError("window must satisfy 0 <= t0 < t1 <= T")
        if self.init is not None:
            check_same_grid(self.init.grid, self.grid)

    def forcing_at(self, mesh, t):
        if self.forcing is None:
            return None
        if callable(self.forcing):
            return np.asarray(self.forcing(mesh, t), dtype=float)
        return np.asarray(self.forcing, dtype=float)

    def forcing_sup(self, mesh, times):
        if self.forcing is None:
            return 0.0
        return max(float(np.max(np.abs(self.forcing_at(mesh, t)))) for t in times)


class HeatSeries:
    """Solution values at the initial time and each output time."""

    def __init__(self, problem, times, fields):
        self.problem = problem
        self.times = np.asarray(times, dtype=float)
        self.fields = fields

    def sup_series(self):
        return np.array([float(np.max(np.abs(f.values))) for f in self.fields])

    def final(self):
        return self.fields[-1]


def solve(problem, n_outputs=16):
    """Integrate the problem; returns the series including the initial slice."""
    grid = problem.grid
    mesh = grid.mesh()
    cache = CoeffCache(problem.metric, grid)
    settings = problem.settings
    jumps = problem.init.jumps if problem.init is not None else (0.0,) * grid.dim

    def rhs(t, u):
        coeffs = cache.at(t)
        du = coeffs.apply(u, jumps)
        fv = problem.forcing_at(mesh, t)
        if fv is not None:
            du = du + fv
        return du

    def dt_fn(t):
        return stable_dt(cache.at(t), grid, settings)

    t0, t1 = problem.window
    u0 = problem.init.values if problem.init is not None else np.zeros(grid.shape)
    times = [t0] + output_times(t0, t1, n_outputs)
    series = integrate_with_outputs(u0, t0, times[1:], rhs, dt_fn, settings)
    fields = [ScalarField(grid, u0.copy(), t=t0, jumps=jumps)]
    fields += [ScalarField(grid, v, t=t, jumps=jumps) for t, v in zip(times[1:], series)]
    return HeatSeries(problem, times, fields)


def solve_inhomogeneous(problem, n_outputs=16):
    """Forced problem with zero initial data; checks sup|u| <= t sup|F|."""
    if problem.init is not None and float(np.max(np.abs(problem.init.values))) != 0.0:
        raise ValueError("inhomogeneous problem takes zero initial data")
    series = solve(problem, n_outputs)
    return series, sup_bound_entry(series)


def solve_homogeneous(problem, n_outputs=16):
    """Unforced problem; checks min f <= v <= max f at the discrete level."""
    if problem.forcing is not None:
        raise ValueError("homogeneous problem takes no forcing")
    series = solve(problem, n_outputs)
    return series, sup_bound_entry(series)


_SCHEME_SLACK = 1e-6
_MAXPRIN_EPS = 1e-8


def sup_bound_entry(series):
    """Sup-norm bound entry for a solved series (forced or unforced)."""
    problem = series.problem
    mesh = problem.grid.mesh()
    t0 = series.times[0]
    if problem.forcing is None:
        f = series.fields[0].values
        lo, hi = float(np.min(f)), float(np.max(f))
        margins, violation = [], None
        for t, fld in zip(series.times[1:], series.fields[1:]):
            m = min(hi + _MAXPRIN_EPS - float(np.max(fld.values)),
                    float(np.min(fld.values)) - (lo - _MAXPRIN_EPS))
            margins.append(m)
            if m < 0 and violation is None:
                violation = {"x": _argmax_idx(np.abs(fld.values)), "t": float(t)}
        return BoundsEntry(
            name="sup-bound-homogeneous",
            statement="min f - eps <= v(t) <= max f + eps (discrete maximum principle)",
            passed=all(m >= 0 for m in margins),
            times=list(series.times[1:]), margins=margins,
            fitted={"init_min": lo, "init_max": hi}, violation=violation,
        )
    sup_f = problem.forcing_sup(mesh, series.times)
    margins, violation = [], None
    for t, fld in zip(series.times[1:], series.fields[1:]):
        bound = (t - t0) * sup_f * (1.0 + _SCHEME_SLACK)
        m = bound - float(np.max(np.abs(fld.values)))
        margins.append(m)
        if m < 0 and violation is None:
            violation = {"x": _argmax_idx(np.abs(fld.values)), "t": float(t)}
    return BoundsEntry(
        name="sup-bound-inhomogeneous",
        statement="sup|u(t)| <= t * sup|F| * (1 + scheme slack)",
        passed=all(m >= 0 for m in margins),
        times=list(series.times[1:]), margins=margins,
        fitted={"sup_forcing": sup_f}, violation=violation,
    )


def _argmax_idx(values):
    return [int(i) for i in np.unravel_index(int(np.argmax(values)), values.shape)]


def _sup_grad(snap, field):
    return float(np.sqrt(np.max(grad_norm_sq(snap, field).values)))


def verify_gradient_estimates(series, n_ratio_floor=1e-300):
    """Gradient-growth entries for a solved series.

    Forced runs report sup|grad u| / (sup|F| sqrt(t)); unforced runs fit the
    growth factor at the first output and check it for all later times, plus
    the sqrt(t)-continuity ratio sup|v - f| / (sqrt(t) sup|grad f|).
    """
    problem = series.problem
    mesh = problem.grid.mesh()
    t0 = series.times[0]
    snaps = [build_snapshot(problem.metric, problem.grid, t) for t in series.times]
    entries = []
    if problem.forcing is not None:
        sup_f = problem.forcing_sup(mesh, series.times)
        ratios = []
        for t, snap, fld in zip(series.times[1:], snaps[1:], series.fields[1:]):
            denom = sup_f * np.sqrt(t - t0)
            g = _sup_grad(snap, fld)
            ratios.append(g / denom if denom > n_ratio_floor else 0.0)
        entries.append(BoundsEntry(
            name="gradient-forced-ratio",
            statement="sup|grad u|(t) / (sup|F| sqrt(t)) stays bounded",
            passed=all(np.isfinite(ratios)),
            times=list(series.times[1:]), margins=[],
            fitted={"C_ratio_max": float(np.max(ratios)) if ratios else 0.0},
        ))
        return entries
    f0 = series.fields[0]
    sup_g0 = _sup_grad(snaps[0], f0)
    g_series = [_sup_grad(s, f) for s, f in zip(snaps[1:], series.fields[1:])]
    t1 = series.times[1] - t0
    if sup_g0 > 0 and g_series[0] > sup_g0:
        c_hat = float(np.log(g_series[0] / sup_g0) / t1)
    else:
        c_hat = 0.0
    margins = []
    for t, g in zip(series.times[1:], g_series):
        margins.append(np.exp(c_hat * (t - t0)) * sup_g0 * (1.0 + 1e-9) + 1e-12 - g)
    entries.append(BoundsEntry(
        name="gradient-growth-homogeneous",
        statement="sup|grad v|(t) <= exp(C t) sup|grad f| with C fitted at the first step",
        passed=all(m >= 0 for m in margins),
        times=list(series.times[1:]), margins=margins,
        fitted={"C_hat": c_hat, "sup_grad_init": sup_g0},
    ))
    ratios = []
    for t, fld in zip(series.times[1:], series.fields[1:]):
        denom = np.sqrt(t - t0) * sup_g0
        diff = float(np.max(np.abs(fld.values - f0.values)))
        ratios.append(diff / denom if denom > n_ratio_floor else 0.0)
    entries.append(BoundsEntry(
        name="continuity-sqrt-t",
        statement="sup|v(t) - f| / (sqrt(t) sup|grad f|) stays bounded",
        passed=all(np.isfinite(ratios)),
        times=list(series.times[1:]),
        fitted={"C_ratio_max": float(np.max(ratios)) if ratios else 0.0},
    ))
    return entries


def residual_slack(tol, t_span, scale):
    """Conclusion slack for the maximum-principle check."""
    return t_span * tol + _MAXPRIN_EPS * (1.0 + scale)


def maximum_principle_check(metric, grid, times, fields, tol=None):
    """Generalized maximum principle on a candidate supersolution trace.

    The candidate must satisfy (d/dt - Lap) w <= tol wherever w >= 0 (checked
    with forward differences at the trace cadence) and w(., 0) <= 0; the
    entry then asserts max w <= residual_slack.  A residual beyond tol raises
    NotASupersolution: the caller fed an invalid candidate.
    """
    times = np.asarray(times, dtype=float)
    if len(times) < 2:
        raise ValueError("need at least two trace times")
    w0 = fields[0].values
    scale = max(float(np.max(np.abs(f.values))) for f in fields)
    if float(np.max(w0)) > 1e-12 * (1.0 + scale):
        raise ValueError("candidate must satisfy w(., 0) <= 0")
    dt_trace = float(np.max(np.diff(times)))
    h2 = sum(h * h for h in grid.spacing)
    if tol is None:
        # honest discretization slack: C4-norm proxy measured from the trace
        proxy = scale
        for t, f in zip(times, fields):
            snap = build_snapshot(metric, grid, t)
            lw = laplace_beltrami(snap, f)
            proxy = max(proxy, float(np.max(np.abs(lw.values))))
            proxy = max(proxy, float(np.max(np.abs(laplace_beltrami(snap, lw).values))))
        tol = 10.0 * (h2 + dt_trace) * proxy
    worst_res = 0.0
    for k in range(len(times) - 1):
        t, t_next = times[k], times[k + 1]
        snap = build_snapshot(metric, grid, t)
        res = (fields[k + 1].values - fields[k].values) / (t_next - t) - laplace_beltrami(snap, fields[k]).values
        active = fields[k].values >= -1e-12 * (1.0 + scale)
        if np.any(active):
            over = res[active] - tol
            if np.any(over > 0):
                flat = int(np.argmax(res - np.where(active, 0.0, np.inf)))
                idx = np.unravel_index(flat, res.shape)
                raise NotASupersolution([int(i) for i in idx], float(t), float(res[idx]))
            worst_res = max(worst_res, float(np.max(res[active])))
    slack = residual_slack(tol, float(times[-1] - times[0]), scale)
    margins, violation = [], None
    for t, f in zip(times, fields):
        m = slack - float(np.max(f.values))
        margins.append(m)
        if m < 0 and violation is None:
            violation = {"x": _argmax_idx(f.values), "t": float(t)}
    return BoundsEntry(
        name="maximum-principle",
        statement="supersolution with w(.,0) <= 0 stays below the residual slack",
        passed=all(m >= 0 for m in margins),
        times=list(times), margins=margins,
        fitted={"residual_tol": tol, "slack": slack, "worst_residual": worst_res},
        violation=violation,
    )
