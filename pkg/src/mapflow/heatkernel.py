"""Discrete fundamental solution of the evolving-metric heat operator.

A kernel table is built by forward-stepping a discrete delta.  The
source-time mass identity and the two-source L1 difference are evaluated in
the *middle* argument: on static metrics via source symmetry of the
self-adjoint scheme, on evolving metrics by solving the conjugate backward
equation (-d/ds - Lap_{g(s)} - h) v = 0 with h = (1/2) tr_g(dg/dt), whose
source-time mass is an exact invariant of the continuous system.
"""

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import dijkstra

from .errors import InsufficientData, MetricMismatch, UnstableStep
from .geometry import lap_coeffs
from .stepping import CoeffCache, StepperSettings, integrate_with_outputs, output_times, stable_dt

MASS_TOL_STATIC = 1e-6
MASS_TOL_EVOLVING = 1e-3


class KernelTable:
    """G(x, t_k; y, s) for one source (y, s), sampled at output times."""

    def __init__(self, metric, grid, source, s, times, values, settings):
        self.metric = metric
        self.grid = grid
        self.source = tuple(int(i) for i in np.atleast_1d(source))
        self.s = float(s)
        self.times = np.asarray(times, dtype=float)
        self.values = values  # list of arrays, one per output time
        self.settings = settings

    @property
    def mass_tol(self):
        return MASS_TOL_STATIC if self.metric.static else MASS_TOL_EVOLVING


def _delta_values(metric, grid, source, t):
    coeffs = lap_coeffs(metric, grid, t)
    u = np.zeros(grid.shape)
    u[source] = 1.0 / (coeffs.sqrt_det[source] * grid.cell_volume)
    return u


class _ZerothCache:
    """h = (1/2) tr_g(dg/dt) by time, for the conjugate equation."""

    def __init__(self, metric, grid):
        self.metric = metric
        self.grid = grid
        self._recent = {}

    def at(self, t, coeffs):
        val = self._recent.get(t)
        if val is None:
            H = self.metric.velocity_values(self.grid, t)
            val = 0.5 * np.einsum("ij...,ij...->...", coeffs.g_inv, H)
            if len(self._recent) > 4:
                self._recent.clear()
            self._recent[t] = val
        return val


def propagate(metric, grid, values, t0, t1, settings=StepperSettings(), dt=None):
    """Forward-solve the homogeneous heat equation from arbitrary data."""
    cache = CoeffCache(metric, grid)

    def rhs(t, u):
        return cache.at(t).apply(u)

    def dt_fn(t):
        limit = stable_dt(cache.at(t), grid, settings)
        if dt is not None:
            if dt > limit * (1.0 + 1e-12):
                raise UnstableStep(f"requested dt {dt:.3e} exceeds stable limit {limit:.3e}")
            return dt
        return limit

    return integrate_with_outputs(values, t0, [t1], rhs, dt_fn, settings)[0]


def build_kernel(metric, grid, source, s, T, n_outputs=8, dt=None, settings=StepperSettings()):
    """Forward-build the kernel table from a discrete delta at (source, s)."""
    s = float(s)
    if not s < T <= metric.T + 1e-12:
        raise ValueError("need s < T <= family window")
    source = tuple(int(i) for i in np.atleast_1d(source))
    u0 = _delta_values(metric, grid, source, s)
    cache = CoeffCache(metric, grid)

    def rhs(t, u):
        return cache.at(t).apply(u)

    def dt_fn(t):
        limit = stable_dt(cache.at(t), grid, settings)
        if dt is not None:
            if dt > limit * (1.0 + 1e-12):
                raise UnstableStep(f"requested dt {dt:.3e} exceeds stable limit {limit:.3e}")
            return dt
        return limit

    times = output_times(s, T, n_outputs)
    series = integrate_with_outputs(u0, s, times, rhs, dt_fn, settings)
    return KernelTable(metric, grid, source, s, times, series, settings)


def conjugate_solve(metric, grid, x_index, t_from, s_to, settings=StepperSettings()):
    """G(x, t_from; ., s_to) as a function of the middle argument.

    Steps the conjugate equation backward from a delta at (x, t_from); the
    zeroth-order term caps the step size alongside the CFL policy.
    """
    x_index = tuple(int(i) for i in np.atleast_1d(x_index))
    if not s_to < t_from:
        raise ValueError("conjugate solve needs s_to < t_from")
    cache = CoeffCache(metric, grid)
    zcache = _ZerothCache(metric, grid)

    def rhs(tau, v):
        t = t_from - tau
        coeffs = cache.at(t)
        return coeffs.apply(v) + zcache.at(t, coeffs) * v

    def dt_fn(tau):
        t = t_from - tau
        coeffs = cache.at(t)
        zsup = float(np.max(np.abs(zcache.at(t, coeffs))))
        return stable_dt(coeffs, grid, settings, zeroth_sup=zsup)

    v0 = _delta_values(metric, grid, x_index, t_from)
    return integrate_with_outputs(v0, 0.0, [t_from - s_to], rhs, dt_fn, settings)[0]


def _source_mass(metric, grid, values, s):
    w = lap_coeffs(metric, grid, s).sqrt_det
    return float(np.sum(values * w) * grid.cell_volume)


def kernel_mass_series(table):
    """The source-time mass at every output time of the table.

    Static metrics use source symmetry (the forward field already is the
    middle-argument kernel); evolving metrics re-derive the middle-argument
    kernel by one conjugate solve per output time.
    """
    masses = []
    if table.metric.static:
        for vals in table.values:
            masses.append(_source_mass(table.metric, table.grid, vals, table.s))
    else:
        for t_k in table.times:
            v = conjugate_solve(table.metric, table.grid, table.source, t_k, table.s, table.settings)
            masses.append(_source_mass(table.metric, table.grid, v, table.s))
    return table.times.copy(), np.asarray(masses)


# ---------------------------------------------------------------------------
# distances on the grid


def distance_field(metric, grid, source, t):
    """Geodesic distance from a grid point with respect to g(t).

    m=1 integrates arc length around the circle; m=2 runs Dijkstra on the
    8-neighbor graph with metric edge lengths (upper bound, 2nd order in h).
    """
    source = tuple(int(i) for i in np.atleast_1d(source))
    g = metric.metric_values(grid, t)
    if grid.dim == 1:
        sq = np.sqrt(g[0, 0])
        h = grid.spacing[0]
        edge = 0.5 * h * (sq + np.roll(sq, -1))  # length of segment i -> i+1
        n = grid.sizes[0]
        total = float(np.sum(edge))
        fwd = np.zeros(n)
        order = (np.arange(n) + source[0]) % n
        fwd[1:] = np.cumsum(edge[order[:-1]])
        dist = np.minimum(fwd, total - fwd)
        out = np.empty(n)
        out[order] = dist
        return out
    n1, n2 = grid.sizes
    h1, h2 = grid.spacing
    npts = n1 * n2
    idx = np.arange(npts).reshape(n1, n2)
    rows, cols, lens = [], [], []
    for d1, d2 in ((1, 0), (0, 1), (1, 1), (1, -1)):
        nbr = np.roll(np.roll(idx, -d1, axis=0), -d2, axis=1)
        dx = np.array([d1 * h1, d2 * h2])
        gmid = 0.5 * (g + np.roll(np.roll(g, -d1, axis=2), -d2, axis=3))
        seg = np.sqrt(
            gmid[0, 0] * dx[0] * dx[0] + 2.0 * gmid[0, 1] * dx[0] * dx[1] + gmid[1, 1] * dx[1] * dx[1]
        )
        rows.append(idx.ravel())
        cols.append(nbr.ravel())
        lens.append(seg.ravel())
    graph = coo_matrix(
        (np.concatenate(lens), (np.concatenate(rows), np.concatenate(cols))), shape=(npts, npts)
    )
    src_flat = source[0] * n2 + source[1]
    dist = dijkstra(graph, directed=False, indices=src_flat)
    return dist.reshape(n1, n2)


# ---------------------------------------------------------------------------
# fits and comparisons


def gaussian_bound_fit(table, rel_floor=1e-3):
    """Least-squares fit of log G against -r^2/(t-s) with per-time amplitudes.

    Uses the g(0) distance from the source.  Returns a dict with the shared
    decay constant D_fit, the mean amplitude C_fit and the fit residual.
    """
    if len(table.times) < 3:
        raise InsufficientData("need at least 3 output times for the fit")
    r = distance_field(table.metric, table.grid, table.source, 0.0)
    xs, ys, tags = [], [], []
    for k, (t_k, vals) in enumerate(zip(table.times, table.values)):
        floor = rel_floor * float(np.max(vals))
        mask = vals > floor
        if np.count_nonzero(mask) < 3:
            continue
        xs.append(-(r[mask] ** 2) / (t_k - table.s))
        ys.append(np.log(vals[mask]))
        tags.append(np.full(np.count_nonzero(mask), k))
    if not xs:
        raise InsufficientData("no samples above the fit floor")
    x = np.concatenate(xs)
    y = np.concatenate(ys)
    tag = np.concatenate(tags)
    used = sorted(set(tag.tolist()))
    cols = [x[:, None]]
    for k in used:
        cols.append((tag == k).astype(float)[:, None])
    A = np.hstack(cols)
    coef, _, _, _ = np.linalg.lstsq(A, y, rcond=None)
    slope = coef[0]
    if slope <= 0:
        raise InsufficientData("fit produced a non-positive decay slope")
    resid = float(np.sqrt(np.mean((A @ coef - y) ** 2)))
    return {
        "D_fit": float(1.0 / slope),
        "C_fit": float(np.exp(np.mean(coef[1:]))),
        "residual_rms": resid,
        "n_samples": int(len(y)),
        "n_times": len(used),
    }


def kernel_difference_l1(table_p, table_q):
    """L1 distance of the middle-argument kernels from two sources.

    Returns (times, l1 series, r_t series, C series) with the fitted constant
    C(t) = L1 * sqrt(t - s) / r_t(p, q).
    """
    if table_p.grid != table_q.grid or abs(table_p.s - table_q.s) > 1e-14:
        raise MetricMismatch("tables must share grid and source time")
    if table_p.metric is not table_q.metric and table_p.metric.label != table_q.metric.label:
        raise MetricMismatch("tables must share the metric family")
    if len(table_p.times) != len(table_q.times) or np.max(np.abs(table_p.times - table_q.times)) > 1e-14:
        raise MetricMismatch("tables must share output times")
    metric, grid, s = table_p.metric, table_p.grid, table_p.s
    w_s = lap_coeffs(metric, grid, s).sqrt_det
    l1 = []
    r_t = []
    for k, t_k in enumerate(table_p.times):
        if metric.static:
            gp, gq = table_p.values[k], table_q.values[k]
        else:
            gp = conjugate_solve(metric, grid, table_p.source, t_k, s, table_p.settings)
            gq = conjugate_solve(metric, grid, table_q.source, t_k, s, table_q.settings)
        l1.append(float(np.sum(np.abs(gp - gq) * w_s) * grid.cell_volume))
        r_t.append(float(distance_field(metric, grid, table_p.source, t_k)[table_q.source]))
    times = table_p.times.copy()
    l1 = np.asarray(l1)
    r_t = np.asarray(r_t)
    C = l1 * np.sqrt(times - s) / np.where(r_t > 0, r_t, np.inf)
    return times, l1, r_t, C


def shift_ratio_record(table, deltas=(0.25, 0.5), rel_floor=1e-3):
    """Empirical kernel ratios between times t and (1+delta)t (recorded only).

    No pass/fail claim is attached; the constants of the underlying shift
    inequality are not computable from first principles here.
    """
    out = {}
    ts = table.times - table.s
    for delta in deltas:
        best = None
        for k, t_k in enumerate(ts):
            target = (1.0 + delta) * t_k
            j = int(np.argmin(np.abs(ts - target)))
            if j <= k or abs(ts[j] - target) > 0.25 * ts[k]:
                continue
            a, b = table.values[k], table.values[j]
            floor = rel_floor * float(np.max(a))
            mask = (a > floor) & (b > floor)
            if not np.any(mask):
                continue
            ratio = float(np.max(np.log(a[mask] / b[mask])))
            if best is None or ratio > best:
                best = ratio
        if best is not None:
            out[f"log_ratio_max_delta_{delta:g}"] = best
    return out
