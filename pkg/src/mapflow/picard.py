"""Frozen-coefficient iteration for the semilinear heat system.

Each sweep solves q decoupled *linear* heat problems whose forcing
F_BC(u_prev) <grad u_prev^B, grad u_prev^C> is frozen from the previous
iterate.  Stage forcings are evaluated so that the fixed point of the sweep
map coincides exactly (to rounding) with the direct nonlinear integrator of
the same scheme: the sqrt(T1)-contraction bookkeeping can then be checked
against the direct solve at the iteration tolerance.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import NoConvergence
from .geometry import lap_coeffs
from .grid import MapField, check_same_grid
from .report import BoundsEntry
from .stepping import CoeffCache, StepperSettings, stable_dt

LEDGER_SLACK = 1e-6


@dataclass
class SemiLinearProblem:
    """Vector heat system with quadratic gradient nonlinearity.

    coeff_fn(u) maps point values (q, ...) to the coefficient tensor
    F^A_BC(u) of shape (q, q, q, ...); L bounds |F| and m_const is the
    initial gradient size sup (sum_A |grad f^A|^2)^(1/2).
    """

    metric: object
    grid: object
    q: int
    coeff_fn: object
    init: MapField
    L: float
    m_const: float = None
    settings: StepperSettings = StepperSettings()

    def __post_init__(self):
        check_same_grid(self.init.grid, self.grid)
        if self.init.q != self.q:
            raise ValueError("initial map component count does not match q")
        if self.m_const is None:
            coeffs = lap_coeffs(self.metric, self.grid, 0.0)
            self.m_const = float(np.sqrt(np.max(_grad_sq_sum(coeffs, self.grid, self.init.values, self.init.jumps))))


def from_target(metric, grid, target, init, settings=StepperSettings()):
    """Problem whose coefficients are minus the projection Hessian of a target."""

    def coeff_fn(u):
        return -_projection_hessian(target, u)

    return SemiLinearProblem(
        metric=metric, grid=grid, q=target.q, coeff_fn=coeff_fn, init=init,
        L=float(target.hess_bound), settings=settings,
    )


def _projection_hessian(target, z):
    """pi^A_BC(z) for tube points z, shape (q, q, q) + z.shape[1:]."""
    if target.kind == "euclidean":
        return np.zeros((target.q, target.q, target.q) + z.shape[1:])
    nz = np.sqrt(np.sum(z * z, axis=0))
    inv3 = target.r / nz**3
    inv5 = 3.0 * target.r / nz**5
    q = target.q
    eye = np.eye(q)
    out = np.empty((q, q, q) + z.shape[1:])
    for a in range(q):
        for b in range(q):
            for c in range(q):
                out[a, b, c] = (
                    -(eye[a, b] * z[c] + eye[a, c] * z[b] + eye[b, c] * z[a]) * inv3
                    + z[a] * z[b] * z[c] * inv5
                )
    return out


def _grad_comps(grid, values, jumps):
    from .geometry import grad_components

    q = values.shape[0]
    return [
        grad_components(grid, values[a], tuple(jumps[ax][a] for ax in range(grid.dim)))
        for a in range(q)
    ]


def _grad_sq_sum(coeffs, grid, values, jumps):
    """sum_A |grad u^A|^2_{g} pointwise."""
    du = _grad_comps(grid, values, jumps)
    acc = np.zeros(grid.shape)
    for a in range(values.shape[0]):
        for i in range(grid.dim):
            for j in range(grid.dim):
                acc += coeffs.g_inv[i, j] * du[a][i] * du[a][j]
    return acc


def _quadratic_rhs(problem, coeffs, values, jumps):
    """F^A_BC(u) <grad u^B, grad u^C> pointwise."""
    du = _grad_comps(problem.grid, values, jumps)
    q = problem.q
    pairs = np.empty((q, q) + problem.grid.shape)
    for b in range(q):
        for c in range(b, q):
            acc = np.zeros(problem.grid.shape)
            for i in range(problem.grid.dim):
                for j in range(problem.grid.dim):
                    acc += coeffs.g_inv[i, j] * du[b][i] * du[c][j]
            pairs[b, c] = acc
            pairs[c, b] = acc
    if not np.any(pairs):
        # gradient-free iterate (the u^(-1) = 0 convention): the quadratic
        # factor annihilates the coefficient, which may be singular at 0
        return np.zeros((q,) + problem.grid.shape)
    F = problem.coeff_fn(values)
    return np.einsum("abc...,bc...->a...", F, pairs)


@dataclass
class IterationTrace:
    T1: float
    dt: float
    n_steps: int
    p_k: list = field(default_factory=list)     # sup_(x, [0, T1]) gradient size per sweep
    d_k: list = field(default_factory=list)     # sup |u^k - u^(k-1)| for k >= 1
    converged: bool = False
    sweeps: int = 0
    L_sampled: float = 0.0

    def decay_ratio(self):
        """Largest late-stage ratio d_(k+1)/d_k (nan with fewer than 4 sweeps)."""
        if len(self.d_k) < 3:
            return float("nan")
        ratios = [self.d_k[i + 1] / self.d_k[i] for i in range(1, len(self.d_k) - 1) if self.d_k[i] > 0]
        return float(max(ratios)) if ratios else 0.0


def _step_grid(problem, T1):
    cache = CoeffCache(problem.metric, problem.grid)
    probe = np.linspace(0.0, T1, 9)
    dt_lim = min(stable_dt(cache.at(t), problem.grid, problem.settings) for t in probe)
    n_steps = max(1, int(np.ceil(T1 / dt_lim - 1e-12)))
    return cache, T1 / n_steps, n_steps


def _apply_lap(coeffs, values, jumps, grid):
    out = np.empty_like(values)
    for a in range(values.shape[0]):
        out[a] = coeffs.apply(values[a], tuple(jumps[ax][a] for ax in range(grid.dim)))
    return out


def picard_iterate(problem, T1, k_max=50, conv_tol=1e-9):
    """Sweep until successive iterates differ by at most conv_tol.

    Returns (final iterate values at every step time, IterationTrace); raises
    NoConvergence when the sweep budget runs out, which signals the caller to
    shrink T1.
    """
    grid = problem.grid
    cache, dt, n_steps = _step_grid(problem, T1)
    times = dt * np.arange(n_steps + 1)
    jumps = problem.init.jumps
    rk2 = problem.settings.scheme == "rk2"

    prev = np.zeros((n_steps + 1, problem.q) + grid.shape)  # u^(-1) = 0
    trace = IterationTrace(T1=T1, dt=dt, n_steps=n_steps)
    current = None
    for k in range(k_max):
        u = np.repeat(problem.init.values[None], 1, axis=0)[0].copy()
        sweep_vals = np.empty_like(prev)
        sweep_vals[0] = u
        p_sup = np.sqrt(np.max(_grad_sq_sum(cache.at(0.0), grid, u, jumps)))
        for n in range(n_steps):
            t0, t1 = times[n], times[n + 1]
            c0 = cache.at(t0)
            r1 = _quadratic_rhs(problem, c0, prev[n], jumps)
            k1 = _apply_lap(c0, u, jumps, grid) + r1
            if rk2:
                c1 = cache.at(t1)
                pred = prev[n] + dt * (_apply_lap(c0, prev[n], jumps, grid) + r1)
                r2 = _quadratic_rhs(problem, c1, pred, jumps)
                u_star = u + dt * k1
                k2 = _apply_lap(c1, u_star, jumps, grid) + r2
                u = u + (0.5 * dt) * (k1 + k2)
            else:
                u = u + dt * k1
            sweep_vals[n + 1] = u
            p_sup = max(p_sup, np.sqrt(np.max(_grad_sq_sum(cache.at(t1), grid, u, jumps))))
        trace.p_k.append(float(p_sup))
        trace.sweeps = k + 1
        if k >= 1:
            d = float(np.max(np.abs(sweep_vals - prev)))
            trace.d_k.append(d)
            if d <= conv_tol:
                trace.converged = True
                prev = sweep_vals
                break
        prev = sweep_vals
    if not trace.converged:
        raise NoConvergence(k_max, trace.d_k[-1] if trace.d_k else float("inf"))
    trace.L_sampled = float(np.sqrt(np.max(np.sum(problem.coeff_fn(prev[-1]) ** 2, axis=(0, 1, 2)))))
    solution = PicardSolution(problem, times, prev, trace)
    return solution, trace


@dataclass
class PicardSolution:
    problem: object
    times: np.ndarray
    values: np.ndarray  # (n_steps + 1, q) + grid.shape
    trace: IterationTrace

    def final_field(self):
        return MapField(self.problem.grid, self.values[-1].copy(), t=float(self.times[-1]),
                        jumps=self.problem.init.jumps)

    def field_at(self, k):
        return MapField(self.problem.grid, self.values[k].copy(), t=float(self.times[k]),
                        jumps=self.problem.init.jumps)


def direct_solve(problem, T1):
    """Nonlinear integration of the same semilinear system, same step grid.

    The scheme coincides with the fixed point of the sweep map, so a
    converged iteration must match this trajectory to about conv_tol.
    """
    grid = problem.grid
    cache, dt, n_steps = _step_grid(problem, T1)
    times = dt * np.arange(n_steps + 1)
    jumps = problem.init.jumps
    rk2 = problem.settings.scheme == "rk2"
    u = problem.init.values.copy()
    vals = np.empty((n_steps + 1, problem.q) + grid.shape)
    vals[0] = u
    for n in range(n_steps):
        t0, t1 = times[n], times[n + 1]
        c0 = cache.at(t0)
        k1 = _apply_lap(c0, u, jumps, grid) + _quadratic_rhs(problem, c0, u, jumps)
        if rk2:
            c1 = cache.at(t1)
            u_star = u + dt * k1
            k2 = _apply_lap(c1, u_star, jumps, grid) + _quadratic_rhs(problem, c1, u_star, jumps)
            u = u + (0.5 * dt) * (k1 + k2)
        else:
            u = u + dt * k1
        vals[n + 1] = u
    return PicardSolution(problem, times, vals, None)


def contraction_ledger(trace, L, m_const):
    """Fit the smallest contraction constant and check the induction bound.

    With C1 the smallest constant satisfying the sweep recursion
    sqrt(t) C1 p_k <= (sqrt(t) C1 p_(k-1))^2 + C1^2 sqrt(t) m at t = T1 for
    every recorded sweep, the smallness condition C1^2 sqrt(T1) m <= 1/4
    must propagate sqrt(T1) C1 p_k <= 1/2 to all sweeps.
    """
    if len(trace.p_k) < 3:
        raise ValueError("ledger needs at least 3 recorded sweeps")
    rt = np.sqrt(trace.T1)
    c1 = 0.0
    for k, p in enumerate(trace.p_k):
        p_prev = trace.p_k[k - 1] if k >= 1 else 0.0
        denom = rt * p_prev**2 + m_const
        if denom > 0:
            c1 = max(c1, p / denom)
    smallness = c1**2 * rt * m_const
    margins = [0.5 + LEDGER_SLACK - c1 * rt * p for p in trace.p_k]
    rho = trace.decay_ratio()
    entry = BoundsEntry(
        name="picard-contraction-ledger",
        statement="fitted C1 satisfies the sweep recursion and C1 sqrt(T1) p_k <= 1/2",
        passed=bool(smallness <= 0.25 + LEDGER_SLACK and all(m >= 0 for m in margins)),
        times=list(range(len(trace.p_k))), margins=margins,
        fitted={
            "C1_fit": c1,
            "smallness": smallness,
            "decay_ratio": rho if np.isfinite(rho) else -1.0,
            "sweeps": trace.sweeps,
            "m_const": m_const,
            "L": L,
        },
        details={"p_k": trace.p_k, "d_k": trace.d_k},
    )
    return entry


def auto_T1(problem, pilot_sweeps=3, T_pilot=None):
    """Window selection: sqrt(T1) = min(sqrt(T), 1/(4 C1^2 (1 + m))).

    C1 is estimated from a short pilot iteration over the full window.
    """
    T = problem.metric.T if T_pilot is None else T_pilot
    grid = problem.grid
    cache, dt, n_steps = _step_grid(problem, T)
    times = dt * np.arange(n_steps + 1)
    jumps = problem.init.jumps
    prev = np.zeros((n_steps + 1, problem.q) + grid.shape)
    p_list = []
    for _ in range(pilot_sweeps):
        u = problem.init.values.copy()
        vals = np.empty_like(prev)
        vals[0] = u
        p_sup = np.sqrt(np.max(_grad_sq_sum(cache.at(0.0), grid, u, jumps)))
        for n in range(n_steps):
            c0 = cache.at(times[n])
            r1 = _quadratic_rhs(problem, c0, prev[n], jumps)
            u = u + dt * (_apply_lap(c0, u, jumps, grid) + r1)
            vals[n + 1] = u
            p_sup = max(p_sup, np.sqrt(np.max(_grad_sq_sum(cache.at(times[n + 1]), grid, u, jumps))))
        p_list.append(float(p_sup))
        prev = vals
    rt = np.sqrt(T)
    c1 = 0.0
    for k, p in enumerate(p_list):
        p_prev = p_list[k - 1] if k >= 1 else 0.0
        c1 = max(c1, p / (rt * p_prev**2 + problem.m_const))
    rt1 = min(np.sqrt(problem.metric.T), 0.25 / (c1**2 * (1.0 + problem.m_const)))
    return float(rt1**2), float(c1)
