"""Metric-dependent differential operators on periodic grids.

Spatial derivatives of the metric use 4th-order central differences; field
derivatives use 2nd-order central differences; the Laplace-Beltrami operator
is the conservative flux form, so its integral telescopes to rounding.
"""

from dataclasses import dataclass, field as dc_field

import numpy as np

from . import _kernels
from .errors import NonSPDMetric
from .grid import Grid, MapField, ScalarField, check_same_grid, shift


# ---------------------------------------------------------------------------
# finite differences


def central_diff(values, axis, h, jump=0.0):
    """2nd-order first derivative along ``axis``."""
    return (shift(values, axis, 1, jump) - shift(values, axis, -1, jump)) / (2.0 * h)


def central_diff4(values, axis, h, jump=0.0):
    """4th-order first derivative along ``axis``."""
    return (
        -shift(values, axis, 2, jump)
        + 8.0 * shift(values, axis, 1, jump)
        - 8.0 * shift(values, axis, -1, jump)
        + shift(values, axis, -2, jump)
    ) / (12.0 * h)


def second_diff(values, axis, h, jump=0.0):
    """2nd-order second derivative along ``axis``."""
    return (shift(values, axis, 1, jump) - 2.0 * values + shift(values, axis, -1, jump)) / (h * h)


# ---------------------------------------------------------------------------
# pointwise 2x2 linear algebra (vectorized over the grid)


def sym_eig_range_2x2(a00, a01, a11):
    tr = a00 + a11
    det = a00 * a11 - a01 * a01
    disc = np.sqrt(np.maximum(tr * tr - 4.0 * det, 0.0))
    return 0.5 * (tr - disc), 0.5 * (tr + disc)


def generalized_eig_min(a, g, dim):
    """Per-point smallest eigenvalue of a relative to SPD g (a, g symmetric)."""
    if dim == 1:
        return a[0, 0] / g[0, 0]
    detg = g[0, 0] * g[1, 1] - g[0, 1] * g[0, 1]
    tr = (g[1, 1] * a[0, 0] - 2.0 * g[0, 1] * a[0, 1] + g[0, 0] * a[1, 1]) / detg
    deta = a[0, 0] * a[1, 1] - a[0, 1] * a[0, 1]
    rel_det = deta / detg
    disc = np.sqrt(np.maximum(tr * tr - 4.0 * rel_det, 0.0))
    return 0.5 * (tr - disc)


# ---------------------------------------------------------------------------
# Laplacian coefficients (the per-step hot state)


class LapCoeffs:
    """Flux coefficients of the conservative Laplacian at one time."""

    def __init__(self, grid, g):
        self.grid = grid
        dim = grid.dim
        g = 0.5 * (g + np.swapaxes(g, 0, 1))
        self.g = g
        if dim == 1:
            g00 = g[0, 0]
            if np.any(g00 <= 0.0):
                idx = int(np.argmin(g00))
                raise NonSPDMetric((idx,), float(g00.flat[idx]))
            self.sqrt_det = np.sqrt(g00)
            self.g_inv = (1.0 / g00)[None, None]
            self.lam_max = float(np.max(self.g_inv[0, 0]))
            c = self.sqrt_det * self.g_inv[0, 0]
            self._cface = 0.5 * (c + np.roll(c, -1))
            self._inv_w = 1.0 / self.sqrt_det
        else:
            det = g[0, 0] * g[1, 1] - g[0, 1] * g[0, 1]
            lo, _ = sym_eig_range_2x2(g[0, 0], g[0, 1], g[1, 1])
            if np.any(lo <= 0.0):
                flat = np.argmin(lo)
                idx = np.unravel_index(flat, lo.shape)
                raise NonSPDMetric(tuple(int(i) for i in idx), float(lo[idx]))
            self.sqrt_det = np.sqrt(det)
            ginv = np.empty_like(g)
            ginv[0, 0] = g[1, 1] / det
            ginv[1, 1] = g[0, 0] / det
            ginv[0, 1] = -g[0, 1] / det
            ginv[1, 0] = ginv[0, 1]
            self.g_inv = ginv
            _, hi = sym_eig_range_2x2(ginv[0, 0], ginv[0, 1], ginv[1, 1])
            self.lam_max = float(np.max(hi))
            c00 = self.sqrt_det * ginv[0, 0]
            c11 = self.sqrt_det * ginv[1, 1]
            self._c12 = self.sqrt_det * ginv[0, 1]
            self._cf1 = 0.5 * (c00 + np.roll(c00, -1, axis=0))
            self._cf2 = 0.5 * (c11 + np.roll(c11, -1, axis=1))
            self._inv_w = 1.0 / self.sqrt_det

    def apply(self, values, jumps=None):
        """Conservative Laplace-Beltrami of point values (one component)."""
        h = self.grid.spacing
        if self.grid.dim == 1:
            j = 0.0 if jumps is None else float(jumps[0])
            return _kernels.lap1(values, self._cface, self._inv_w, 1.0 / (h[0] * h[0]), j)
        j1 = 0.0 if jumps is None else float(jumps[0])
        j2 = 0.0 if jumps is None else float(jumps[1])
        return _kernels.lap2(
            values, self._cf1, self._cf2, self._c12, self._inv_w,
            1.0 / (h[0] * h[0]), 1.0 / (h[1] * h[1]),
            1.0 / (2.0 * h[0]), 1.0 / (2.0 * h[1]), j1, j2,
        )


def lap_coeffs(metric, grid, t):
    return LapCoeffs(grid, metric.metric_values(grid, t))


# ---------------------------------------------------------------------------
# full geometry snapshot


class GeometrySnapshot:
    """All derived tensors of g(., t) on the grid.

    christoffel has index order (k, i, j) for Gamma^k_ij and is exactly
    symmetric in (i, j); ricci/scalar_curv vanish identically for m=1.
    """

    def __init__(self, metric, grid, t, coeffs, christoffel, ricci, scalar_curv,
                 H, H_norm, gradH, gradH_norm):
        self.metric = metric
        self.grid = grid
        self.t = float(t)
        self.coeffs = coeffs
        self.g = coeffs.g
        self.g_inv = coeffs.g_inv
        self.sqrt_det = coeffs.sqrt_det
        self.christoffel = christoffel
        self.ricci = ricci
        self.scalar_curv = scalar_curv
        self.H = H
        self.H_norm = H_norm
        self.gradH = gradH
        self.gradH_norm = gradH_norm

    @property
    def dim(self):
        return self.grid.dim


def _metric_derivatives(grid, g):
    """4th-order partials dg[l, i, j] = d_l g_ij."""
    dim = grid.dim
    dg = np.zeros((dim,) + g.shape)
    for l in range(dim):
        dg[l] = central_diff4(g, 2 + l, grid.spacing[l])
    return dg


def _christoffel(grid, g, g_inv):
    dim = grid.dim
    dg = _metric_derivatives(grid, g)
    # Gamma^k_ij = 0.5 g^{kl} (d_i g_lj + d_j g_li - d_l g_ij)
    gamma = np.zeros((dim, dim, dim) + grid.shape)
    for k in range(dim):
        for i in range(dim):
            for j in range(i, dim):
                acc = np.zeros(grid.shape)
                for l in range(dim):
                    acc += g_inv[k, l] * (dg[i][l, j] + dg[j][l, i] - dg[l][i, j])
                gamma[k, i, j] = 0.5 * acc
                gamma[k, j, i] = gamma[k, i, j]
    return gamma


def _ricci(grid, gamma):
    dim = grid.dim
    if dim == 1:
        return np.zeros((1, 1) + grid.shape)
    h = grid.spacing
    dgamma = np.zeros((dim, dim, dim, dim) + grid.shape)  # dgamma[a, k, i, j] = d_a Gamma^k_ij
    for a in range(dim):
        dgamma[a] = central_diff4(gamma, 3 + a, h[a])
    ric = np.zeros((dim, dim) + grid.shape)
    for s in range(dim):
        for n in range(s, dim):
            acc = np.zeros(grid.shape)
            for mu in range(dim):
                acc += dgamma[mu, mu, n, s] - dgamma[n, mu, mu, s]
                for lam in range(dim):
                    acc += gamma[mu, mu, lam] * gamma[lam, n, s] - gamma[mu, n, lam] * gamma[lam, mu, s]
            ric[s, n] = acc
            ric[n, s] = acc
    return ric


def _tensor2_norm(g_inv, a):
    """|a|_g for a symmetric 2-tensor: sqrt(g^{ik} g^{jl} a_ij a_kl)."""
    raised = np.einsum("ik...,jl...,kl...->ij...", g_inv, g_inv, a)
    return np.sqrt(np.maximum(np.einsum("ij...,ij...->...", raised, a), 0.0))


def _tensor3_norm(g_inv, a):
    """|a|_g for a 3-tensor a[l, i, j]."""
    sq = np.einsum(
        "lm...,ik...,jn...,lij...,mkn...->...", g_inv, g_inv, g_inv, a, a
    )
    return np.sqrt(np.maximum(sq, 0.0))


def _covariant_dH(grid, gamma, H):
    dim = grid.dim
    dH = np.zeros((dim,) + H.shape)
    for a in range(dim):
        dH[a] = central_diff4(H, 2 + a, grid.spacing[a])
    # nabla_a H_ij = d_a H_ij - Gamma^p_ai H_pj - Gamma^p_aj H_ip
    corr = np.einsum("pai...,pj...->aij...", gamma, H) + np.einsum("paj...,ip...->aij...", gamma, H)
    return dH - corr


def build_snapshot(metric, grid, t):
    """Populate every derived tensor of g(., t); raises NonSPDMetric."""
    if grid.dim != metric.dim:
        raise ValueError("metric family dimension does not match grid")
    coeffs = lap_coeffs(metric, grid, t)
    gamma = _christoffel(grid, coeffs.g, coeffs.g_inv)
    ricci = _ricci(grid, gamma)
    scal = np.einsum("ij...,ij...->...", coeffs.g_inv, ricci)
    H = H_norm = gradH = gradH_norm = None
    try:
        H = metric.velocity_values(grid, t)
    except ValueError:
        H = None
    if H is not None:
        H = 0.5 * (H + np.swapaxes(H, 0, 1))
        H_norm = _tensor2_norm(coeffs.g_inv, H)
        gradH = _covariant_dH(grid, gamma, H)
        gradH_norm = _tensor3_norm(coeffs.g_inv, gradH)
    return GeometrySnapshot(metric, grid, t, coeffs, gamma, ricci, scal, H, H_norm, gradH, gradH_norm)


# ---------------------------------------------------------------------------
# field operators


def laplace_beltrami(snap, u):
    """Conservative Laplace-Beltrami of a scalar field."""
    check_same_grid(snap.grid, u.grid)
    return ScalarField(snap.grid, snap.coeffs.apply(u.values, u.jumps), t=snap.t)


def laplace_map(snap, f):
    """Componentwise Laplacian of a map field."""
    check_same_grid(snap.grid, f.grid)
    out = np.empty_like(f.values)
    for a in range(f.q):
        out[a] = snap.coeffs.apply(f.values[a], tuple(f.jumps[ax][a] for ax in range(snap.dim)))
    return MapField(snap.grid, out, t=snap.t)


def grad_components(grid, values, jumps=None):
    """2nd-order central partials [d_1 u, ..., d_m u] of one component."""
    out = []
    for a in range(grid.dim):
        j = 0.0 if jumps is None else float(jumps[a])
        out.append(central_diff(values, values.ndim - grid.dim + a, grid.spacing[a], j))
    return out

def inner_grad(snap, u, w):
    """<grad u, grad w>_{g(t)} = g^{ij} d_i u d_j w pointwise."""
    check_same_grid(snap.grid, u.grid)
    check_same_grid(snap.grid, w.grid)
    du = grad_components(snap.grid, u.values, u.jumps)
    dw = grad_components(snap.grid, w.values, w.jumps)
    acc = np.zeros(snap.grid.shape)
    for i in range(snap.dim):
        for j in range(snap.dim):
            acc += snap.g_inv[i, j] * du[i] * dw[j]
    return ScalarField(snap.grid, acc, t=snap.t)


def grad_norm_sq(snap, u):
    return inner_grad(snap, u, u)


def map_grad_pairs(snap, f):
    """Symmetric matrix of <grad F^B, grad F^C> values, shape (q, q) + grid."""
    check_same_grid(snap.grid, f.grid)
    q = f.q
    du = [
        grad_components(snap.grid, f.values[a], tuple(f.jumps[ax][a] for ax in range(snap.dim)))
        for a in range(q)
    ]
    pairs = np.zeros((q, q) + snap.grid.shape)
    for b in range(q):
        for c in range(b, q):
            acc = np.zeros(snap.grid.shape)
            for i in range(snap.dim):
                for j in range(snap.dim):
                    acc += snap.g_inv[i, j] * du[b][i] * du[c][j]
            pairs[b, c] = acc
            pairs[c, b] = acc
    return pairs


def integrate(snap, u):
    """Riemann sum with the g(t) volume element; exact for constants."""
    check_same_grid(snap.grid, u.grid)
    return float(np.sum(u.values * snap.sqrt_det) * snap.grid.cell_volume)


def volume(snap):
    return float(np.sum(snap.sqrt_det) * snap.grid.cell_volume)


# ---------------------------------------------------------------------------
# assumption audit


@dataclass
class AuditReport:
    """Per-sample lower-bound and velocity-decay constants of a family."""

    times: np.ndarray
    min_eig_series: np.ndarray       # per-sample min over x of eig(2 Ric + H : g)
    K_series: np.ndarray             # max(0, -min_eig)
    K0: float                        # integral of K(t) dt (trapezoid)
    sup_t_H: float                   # sup over samples of t * |H|_g
    sup_t32_gradH: float             # sup over samples of t^{3/2} * |nabla H|_g
    declared: dict = dc_field(default_factory=dict)
    passed: bool = True
    failures: list = dc_field(default_factory=list)

    @property
    def a_const(self):
        return max(self.sup_t_H, self.sup_t32_gradH)

    def lambda_at(self, t):
        """Cumulative integral of K up to t (trapezoid on the sample grid)."""
        ts = self.times
        lam = np.concatenate([[0.0], np.cumsum(0.5 * (self.K_series[1:] + self.K_series[:-1]) * np.diff(ts))])
        return float(np.interp(t, ts, lam))


def assumption_audit(metric, grid, time_samples, declared=None):
    """Measure the constants of the lower-bound and velocity-decay assumptions.

    Always returns a report; pass/fail is evaluated against user-declared
    constants when given (keys 'K0' and 'a', relative slack 1e-9).
    """
    ts = np.asarray(sorted(float(t) for t in time_samples))
    if np.any(ts <= 0.0) or np.any(ts > metric.T):
        raise ValueError("time samples must lie in (0, T]")
    min_eigs = np.zeros(len(ts))
    sup_t_H = 0.0
    sup_t32_gradH = 0.0
    for k, t in enumerate(ts):
        snap = build_snapshot(metric, grid, t)
        if snap.H is None:
            raise ValueError(f"velocity unavailable at t={t}")
        a = 2.0 * snap.ricci + snap.H
        min_eigs[k] = float(np.min(generalized_eig_min(a, snap.g, grid.dim)))
        sup_t_H = max(sup_t_H, t * float(np.max(snap.H_norm)))
        sup_t32_gradH = max(sup_t32_gradH, t ** 1.5 * float(np.max(snap.gradH_norm)))
    K_series = np.maximum(0.0, -min_eigs)
    K0 = float(np.trapezoid(K_series, ts)) if len(ts) > 1 else 0.0
    declared = dict(declared or {})
    failures = []
    if "K0" in declared and K0 > declared["K0"] * (1 + 1e-9) + 1e-15:
        failures.append(f"K0 measured {K0:.6g} exceeds declared {declared['K0']:.6g}")
    if "a" in declared:
        measured = max(sup_t_H, sup_t32_gradH)
        if measured > declared["a"] * (1 + 1e-9) + 1e-15:
            failures.append(f"a measured {measured:.6g} exceeds declared {declared['a']:.6g}")
    return AuditReport(
        times=ts, min_eig_series=min_eigs, K_series=K_series, K0=K0,
        sup_t_H=sup_t_H, sup_t32_gradH=sup_t32_gradH,
        declared=declared, passed=not failures, failures=failures,
    )
