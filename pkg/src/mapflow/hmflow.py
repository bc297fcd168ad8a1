"""Harmonic map heat flow under an evolving domain metric.

The map evolves by its tension field, in ambient form (componentwise
Laplacian plus the projection-Hessian nonlinearity, re-projected onto the
target each stage) or in chart form (domain and target Christoffels).  The
run harness measures energy density, tension decay, the evolution-identity
residuals and the existence-window bookkeeping, and emits a BoundsReport.
"""

from dataclasses import dataclass, field as dc_field

import numpy as np

from .errors import UnstableStep
from .fieldio import field_roundtrip
from .geometry import (
    assumption_audit,
    build_snapshot,
    central_diff,
    integrate,
    lap_coeffs,
    map_grad_pairs,
    second_diff,
)
from .grid import MapField, ScalarField
from .report import BoundsEntry, BoundsReport
from .stepping import StepperSettings, stable_dt

DRIFT_TOL_REL = 1e-8


# ---------------------------------------------------------------------------
# state and pointwise diagnostics


@dataclass
class FlowState:
    field: MapField
    t: float
    snapshot: object
    target: object
    formulation: str = "extrinsic"

    def __post_init__(self):
        if self.formulation not in ("extrinsic", "intrinsic"):
            raise ValueError(f"unknown formulation {self.formulation!r}")
        if self.formulation == "extrinsic":
            drift = float(np.max(self.target.distance(self.field.values)))
            if drift > DRIFT_TOL_REL * max(1.0, self.target.r):
                raise ValueError(f"extrinsic state off the target by {drift:.3e}")


def _comp_jumps(f, a):
    return tuple(f.jumps[ax][a] for ax in range(f.grid.dim))


def _grad_all(grid, f):
    from .geometry import grad_components

    return [grad_components(grid, f.values[a], _comp_jumps(f, a)) for a in range(f.q)]


def energy_density_values(coeffs, grid, target, f, formulation):
    du = _grad_all(grid, f)
    dim = grid.dim
    if formulation == "extrinsic":
        acc = np.zeros(grid.shape)
        for a in range(f.q):
            for i in range(dim):
                for j in range(dim):
                    acc += coeffs.g_inv[i, j] * du[a][i] * du[a][j]
        return acc
    h = target.chart_metric(f.values)
    acc = np.zeros(grid.shape)
    for a in range(f.q):
        for b in range(f.q):
            hab = h[a, b]
            if not np.any(hab):
                continue
            for i in range(dim):
                for j in range(dim):
                    acc += coeffs.g_inv[i, j] * hab * du[a][i] * du[b][j]
    return acc


def energy_density(state):
    """Pointwise e(F) with respect to g(t) and the target pairing."""
    vals = energy_density_values(
        state.snapshot.coeffs, state.field.grid, state.target, state.field, state.formulation
    )
    return ScalarField(state.field.grid, vals, t=state.t)


class _StageGeom:
    """Per-stage metric data: flux coefficients always, Christoffels on demand."""

    def __init__(self, metric, grid, need_gamma):
        self.metric = metric
        self.grid = grid
        self.need_gamma = need_gamma
        self._cache = {}
        self._static_entry = None

    def at(self, t):
        if self.metric.static:
            if self._static_entry is None:
                self._static_entry = self._build(0.0)
            return self._static_entry
        entry = self._cache.get(t)
        if entry is None:
            entry = self._build(t)
            if len(self._cache) > 4:
                self._cache.clear()
            self._cache[t] = entry
        return entry

    def _build(self, t):
        coeffs = lap_coeffs(self.metric, self.grid, t)
        gamma = None
        if self.need_gamma:
            from .geometry import _christoffel

            gamma = _christoffel(self.grid, coeffs.g, coeffs.g_inv)
        return coeffs, gamma


def _tension_values_extrinsic(coeffs, grid, target, f):
    lap = np.empty_like(f.values)
    for a in range(f.q):
        lap[a] = coeffs.apply(f.values[a], _comp_jumps(f, a))
    if target.kind == "sphere":
        # grad pairs against g(t); the contraction is |grad F|^2 F / r^2 on N
        pairs = _pairs(coeffs, grid, f)
        tau = lap + target.projection_hessian_contraction(f.values, pairs)
        return _tangential(target, f.values, tau)
    return lap


def _pairs(coeffs, grid, f):
    du = _grad_all(grid, f)
    q = f.q
    pairs = np.empty((q, q) + grid.shape)
    for b in range(q):
        for c in range(b, q):
            acc = np.zeros(grid.shape)
            for i in range(grid.dim):
                for j in range(grid.dim):
                    acc += coeffs.g_inv[i, j] * du[b][i] * du[c][j]
            pairs[b, c] = acc
            pairs[c, b] = acc
    return pairs


def _tangential(target, F, vec):
    """Project ambient vectors onto the tangent spaces of the sphere at F."""
    if target.kind != "sphere":
        return vec
    unit = F / np.sqrt(np.sum(F * F, axis=0))
    return vec - unit * np.einsum("a...,a...->...", unit, vec)


def _tension_values_intrinsic(coeffs, gamma, grid, target, f):
    du = _grad_all(grid, f)
    dim = grid.dim
    tgamma = target.target_christoffel(f.values)
    out = np.zeros_like(f.values)
    for a in range(f.q):
        hess = np.empty((dim, dim) + grid.shape)
        for i in range(dim):
            hess[i, i] = second_diff(f.values[a], i, grid.spacing[i], f.jumps[i][a])
            for j in range(i + 1, dim):
                dj = central_diff(f.values[a], j, grid.spacing[j], f.jumps[j][a])
                hess[i, j] = central_diff(dj, i, grid.spacing[i], 0.0)
                hess[j, i] = hess[i, j]
        acc = np.zeros(grid.shape)
        for i in range(dim):
            for j in range(dim):
                term = hess[i, j].copy()
                for k in range(dim):
                    term -= gamma[k, i, j] * du[a][k]
                for b in range(f.q):
                    for c in range(f.q):
                        tg = tgamma[a, b, c]
                        if np.any(tg):
                            term += tg * du[b][i] * du[c][j]
                acc += coeffs.g_inv[i, j] * term
        out[a] = acc
    return out


def tension_field(state):
    """Tension field of the state (ambient components or chart components).

    The ambient form is projected onto the tangent space at F(x) to strip
    the normal discretization drift.
    """
    grid = state.field.grid
    if state.formulation == "extrinsic":
        vals = _tension_values_extrinsic(state.snapshot.coeffs, grid, state.target, state.field)
    else:
        from .geometry import _christoffel

        gamma = state.snapshot.christoffel
        vals = _tension_values_intrinsic(state.snapshot.coeffs, gamma, grid, state.target, state.field)
    return MapField(grid, vals, t=state.t)


def tension_sup(coeffs, grid, target, f, formulation, gamma=None):
    """sup_x |tau(F)|_{g(t), h} together with the tension values."""
    if formulation == "extrinsic":
        tau = _tension_values_extrinsic(coeffs, grid, target, f)
        mag = np.sqrt(np.sum(tau * tau, axis=0))
    else:
        tau = _tension_values_intrinsic(coeffs, gamma, grid, target, f)
        h = target.chart_metric(f.values)
        mag = np.sqrt(np.maximum(np.einsum("ab...,a...,b...->...", h, tau, tau), 0.0))
    return tau, mag


# ---------------------------------------------------------------------------
# stepping


def _flow_rhs(stage_geom, grid, target, formulation, jumps):
    def rhs(t, values):
        coeffs, gamma = stage_geom.at(t)
        f = MapField(grid, values, t=t, jumps=jumps)
        if formulation == "extrinsic":
            return _tension_values_extrinsic(coeffs, grid, target, f)
        return _tension_values_intrinsic(coeffs, gamma, grid, target, f)

    return rhs


def _stage_post(target, formulation):
    if formulation == "extrinsic" and target.kind == "sphere":
        return lambda values, t: target.project(values)
    return None


def step_flow(state, dt, settings=StepperSettings()):
    """One explicit step of dF/dt = tau(F); ambient stages re-project."""
    grid = state.field.grid
    stage_geom = _StageGeom(state.snapshot.metric, grid, state.formulation == "intrinsic")
    rhs = _flow_rhs(stage_geom, grid, state.target, state.formulation, state.field.jumps)
    post = _stage_post(state.target, state.formulation)
    from .stepping import euler_step, heun_step

    step = heun_step if settings.scheme == "rk2" else euler_step
    new_values = step(state.field.values, state.t, dt, rhs, post)
    if not np.all(np.isfinite(new_values)):
        raise UnstableStep(f"non-finite flow values after step from t={state.t:.6g}")
    t_new = state.t + dt
    snap = build_snapshot(state.snapshot.metric, grid, t_new)
    f_new = MapField(grid, new_values, t=t_new, jumps=state.field.jumps)
    return FlowState(f_new, t_new, snap, state.target, state.formulation)


# ---------------------------------------------------------------------------
# the run harness


@dataclass
class ResidualSample:
    """States at (t, t+dt, t+2dt) for the one-sided identity residuals."""

    t: float
    dt: float
    values: list          # three value arrays
    jumps: np.ndarray


@dataclass
class FlowDiagnostics:
    times: list = dc_field(default_factory=list)
    sup_e: list = dc_field(default_factory=list)
    sup_tau: list = dc_field(default_factory=list)
    q_series: list = dc_field(default_factory=list)        # sqrt(t) * sup|tau|
    energy_integral: list = dc_field(default_factory=list)
    lambda_series: list = dc_field(default_factory=list)
    v_series: list = dc_field(default_factory=list)
    e_fields: list = dc_field(default_factory=list)
    residual_samples: list = dc_field(default_factory=list)
    e0: float = 0.0
    kappa: float = 0.0
    K0: float = 0.0
    T0: float = 0.0
    T_run: float = 0.0
    dt_max_seen: float = 0.0
    formulation: str = "extrinsic"
    target: object = None
    metric: object = None
    grid: object = None
    audit: object = None
    final_field: object = None


def existence_window(T, kappa, e0, K0):
    """min(T, 1/2 * (2 kappa e0 exp(K0))^-1); the full window when kappa e0 = 0."""
    if kappa * e0 <= 0.0:
        return float(T)
    return float(min(T, 0.5 / (2.0 * kappa * e0 * np.exp(K0))))


def comparison_v(t, e0, kappa, K0):
    """Barrier value (e0^-1 - 2 kappa exp(K0) t)^-1 dominating the energy density."""
    if e0 <= 0.0:
        return 0.0
    denom = 1.0 / e0 - 2.0 * kappa * np.exp(K0) * t
    if denom <= 0.0:
        return float("inf")
    return float(1.0 / denom)


def run_flow(metric, grid, target, init, T=None, formulation="extrinsic",
             settings=StepperSettings(), n_outputs=8, past_T0=False,
             audit_samples=17, capture_residuals=True):
    """Integrate the flow on [0, min(T, T0)] and collect diagnostics.

    T0 comes from the audited constants and the measured initial energy sup;
    integration past T0 needs past_T0=True and marks later entries advisory.
    """
    T = metric.T if T is None else float(T)
    if formulation == "extrinsic" and target.kind == "sphere":
        init = init.copy(values=target.project(init.values))
    stage_geom = _StageGeom(metric, grid, formulation == "intrinsic")
    coeffs0, gamma0 = stage_geom.at(0.0)
    e0_field = energy_density_values(coeffs0, grid, target, init, formulation)
    e0 = float(np.max(e0_field))

    if metric.static:
        audit = None
        K0 = 0.0
        lambda_at = lambda t: 0.0
    else:
        audit = assumption_audit(metric, grid, np.linspace(T / audit_samples, T, audit_samples))
        K0 = audit.K0
        lambda_at = audit.lambda_at

    T0 = existence_window(T, target.kappa, e0, K0)
    T_run = T if past_T0 else min(T, T0)

    diag = FlowDiagnostics(
        e0=e0, kappa=target.kappa, K0=K0, T0=T0, T_run=T_run,
        formulation=formulation, target=target, metric=metric, grid=grid, audit=audit,
    )
    rhs = _flow_rhs(stage_geom, grid, target, formulation, init.jumps)
    post = _stage_post(target, formulation)
    from .stepping import advance, euler_step, heun_step, output_times

    stepper = heun_step if settings.scheme == "rk2" else euler_step

    def dt_fn(t):
        dt = stable_dt(stage_geom.at(t)[0], grid, settings)
        diag.dt_max_seen = max(diag.dt_max_seen, dt)
        return dt

    out_times = output_times(0.0, T_run, n_outputs)
    values = init.values.copy()
    t = 0.0
    for t_out in out_times:
        values, _ = advance(values, t, t_out, rhs, dt_fn, settings, post)
        t = t_out
        f = MapField(grid, values, t=t, jumps=init.jumps)
        coeffs, gamma = stage_geom.at(t)
        e_vals = energy_density_values(coeffs, grid, target, f, formulation)
        tau, tau_mag = tension_sup(coeffs, grid, target, f, formulation, gamma)
        diag.times.append(t)
        diag.sup_e.append(float(np.max(e_vals)))
        diag.sup_tau.append(float(np.max(tau_mag)))
        diag.q_series.append(float(np.sqrt(t) * np.max(tau_mag)))
        diag.energy_integral.append(float(np.sum(e_vals * coeffs.sqrt_det) * grid.cell_volume))
        diag.lambda_series.append(float(lambda_at(t)))
        diag.v_series.append(comparison_v(t, e0, target.kappa, K0))
        diag.e_fields.append(e_vals)
        if capture_residuals and formulation == "extrinsic":
            dt_la = dt_fn(t)  # lookahead pair of steps, discarded afterwards
            v1 = stepper(values, t, dt_la, rhs, post)
            v2 = stepper(v1, t + dt_la, dt_la, rhs, post)
            diag.residual_samples.append(
                ResidualSample(t=t, dt=dt_la, values=[values.copy(), v1, v2], jumps=init.jumps.copy())
            )
    diag.final_field = MapField(grid, values.copy(), t=t, jumps=init.jumps)
    report = BoundsReport(scenario="flow", meta={
        "e0": e0, "kappa": target.kappa, "K0": K0, "T0": T0, "T_run": T_run,
        "formulation": formulation, "grid": list(grid.sizes), "metric": metric.label,
    })
    report.add(window_entry(diag, T))
    report.add(verify_energy_bound(diag))
    report.add(doubling_bound_entry(diag))
    report.add(verify_tension_bound(diag))
    if formulation == "extrinsic" and target.kind == "sphere":
        report.add(sphere_drift_entry(diag))
        report.add(nonlinearity_identity_entry(grid, target, diag.final_field, stage_geom.at(t)[0]))
    if capture_residuals and formulation == "extrinsic":
        report.add(evolution_residual_entry(diag, "energy"))
        report.add(evolution_residual_entry(diag, "tension2"))
    return diag, report


# ---------------------------------------------------------------------------
# bound entries


def _slack(grid, dt):
    h2 = max(h * h for h in grid.spacing)
    return 1e-3 + 10.0 * (h2 + dt)


def window_entry(diag, T_user):
    clipped = diag.T_run < T_user - 1e-15
    return BoundsEntry(
        name="existence-window",
        statement="runs stay inside T0 = min(T, 1/2 (2 kappa e0 exp(K0))^-1) unless forced past it",
        passed=True,
        times=[diag.T_run], margins=[diag.T0 - diag.T_run],
        fitted={"T0": diag.T0, "e0": diag.e0, "kappa": diag.kappa, "K0": diag.K0},
        details={"clipped_at_T0": clipped, "T_user": T_user},
    )


def verify_energy_bound(diag):
    slack = _slack(diag.grid, diag.dt_max_seen)
    margins, advisory_mask, violation = [], [], None
    for t, e_sup, lam, v in zip(diag.times, diag.sup_e, diag.lambda_series, diag.v_series):
        bound = np.exp(lam) * v * (1.0 + slack) + 1e-12
        margins.append(bound - e_sup)
        advisory_mask.append(t > diag.T0 + 1e-15)
        if margins[-1] < 0 and violation is None and not advisory_mask[-1]:
            k = diag.times.index(t)
            idx = np.unravel_index(int(np.argmax(diag.e_fields[k])), diag.e_fields[k].shape)
            violation = {"x": [int(i) for i in idx], "t": float(t)}
    checked = [m for m, a in zip(margins, advisory_mask) if not a]
    return BoundsEntry(
        name="energy-ode-bound",
        statement="pointwise e(F)(t) <= exp(lambda(t)) v(t) (1 + slack) inside the window",
        passed=all(m >= 0 for m in checked),
        advisory=not checked,
        times=list(diag.times), margins=margins,
        fitted={"slack": slack, "e0": diag.e0},
        violation=violation,
    )


def doubling_bound_entry(diag):
    slack = _slack(diag.grid, diag.dt_max_seen)
    bound = 2.0 * diag.e0 * np.exp(diag.K0) * (1.0 + slack) + 1e-12
    margins = []
    checked = []
    for t, e_sup in zip(diag.times, diag.sup_e):
        margins.append(bound - e_sup)
        if t <= diag.T0 + 1e-15:
            checked.append(margins[-1])
    return BoundsEntry(
        name="energy-doubling-bound",
        statement="e(F) <= 2 e0 exp(K0) up to the window end",
        passed=all(m >= 0 for m in checked),
        advisory=not checked,
        times=list(diag.times), margins=margins,
        fitted={"bound": bound},
    )


def verify_tension_bound(diag):
    q = np.asarray(diag.q_series)
    c_fit = float(np.max(q)) if len(q) else 0.0
    return BoundsEntry(
        name="tension-sqrt-t-bound",
        statement="Q(t) = sqrt(t) sup|tau(F)| stays bounded; C fitted as sup Q",
        passed=bool(np.all(np.isfinite(q))),
        times=list(diag.times), margins=[],
        fitted={"C_fit": c_fit},
        details={"Q": [float(v) for v in q]},
    )


def sphere_drift_entry(diag):
    f = diag.final_field
    drift = float(np.max(diag.target.distance(f.values)))
    tol = DRIFT_TOL_REL * diag.target.r
    return BoundsEntry(
        name="sphere-drift",
        statement="|F(x)| stays within driftTol of the sphere radius after projection",
        passed=drift <= tol,
        times=[f.t], margins=[tol - drift],
        fitted={"drift": drift, "tol": tol},
    )


def nonlinearity_identity_entry(grid, target, f, coeffs):
    """Cross-check: -pi_BC(F)<grad F, grad F> equals |grad F|^2 F / r^2 on N.

    The identity presumes tangent gradients (F . grad F = 0, automatic in
    the continuum), so the discrete gradients are projected onto the
    tangent space before the pairs are formed.
    """
    du = _grad_all(grid, f)
    unit = f.values / np.sqrt(np.sum(f.values**2, axis=0))
    du_arr = np.stack([np.stack(d) for d in du])  # (q, dim) + shape
    normal = np.einsum("b...,bi...->i...", unit, du_arr)
    du_tan = du_arr - unit[:, None] * normal[None]
    pairs = np.einsum("ij...,bi...,cj...->bc...", coeffs.g_inv, du_tan, du_tan)
    lhs = target.projection_hessian_contraction(f.values, pairs)
    trace = np.einsum("bb...->...", pairs)
    rhs = trace * f.values / target.r**2
    diff = float(np.max(np.abs(lhs - rhs)))
    scale = max(1.0, float(np.max(np.abs(rhs))))
    return BoundsEntry(
        name="sphere-nonlinearity-identity",
        statement="projection-Hessian contraction equals |grad F|^2 F / r^2 at on-sphere points",
        passed=diff <= 1e-10 * scale,
        times=[f.t], margins=[1e-10 * scale - diff],
        fitted={"max_diff": diff},
    )


# ---------------------------------------------------------------------------
# evolution-identity residuals


def _covariant_hessian(grid, snap, f):
    """Domain-covariant componentwise Hessian F^A_(;ij)."""
    dim = grid.dim
    du = _grad_all(grid, f)
    hess = np.empty((f.q, dim, dim) + grid.shape)
    for a in range(f.q):
        for i in range(dim):
            hess[a, i, i] = second_diff(f.values[a], i, grid.spacing[i], f.jumps[i][a])
            for j in range(i + 1, dim):
                dj = central_diff(f.values[a], j, grid.spacing[j], f.jumps[j][a])
                hess[a, i, j] = central_diff(dj, i, grid.spacing[i], 0.0)
                hess[a, j, i] = hess[a, i, j]
        for i in range(dim):
            for j in range(dim):
                for k in range(dim):
                    hess[a, i, j] -= snap.christoffel[k, i, j] * du[a][k]
    return hess, du


def map_second_fundamental(grid, snap, target, f):
    """DdF (tangential part of the covariant Hessian) and its squared norm."""
    hess, du = _covariant_hessian(grid, snap, f)
    if target.kind == "sphere":
        unit = f.values / np.sqrt(np.sum(f.values**2, axis=0))
        normal = np.einsum("a...,aij...->ij...", unit, hess)
        hess = hess - unit[:, None, None] * normal[None]
    sq = np.einsum("ik...,jl...,aij...,akl...->...", snap.g_inv, snap.g_inv, hess, hess)
    return hess, np.maximum(sq, 0.0), du


def _dt_one_sided(f0, f1, f2, dt):
    return (-3.0 * f0 + 4.0 * f1 - f2) / (2.0 * dt)


def evolution_residual(diag, which, sample):
    """LHS - RHS of the evolution identity for e(F) or |tau(F)|^2.

    Both sides are evaluated coordinate-invariantly on the discrete
    trajectory at the sample time, extrinsic formulation.
    """
    grid, target, metric = diag.grid, diag.target, diag.metric
    t, dt = sample.t, sample.dt
    snap = build_snapshot(metric, grid, t)
    fs = [MapField(grid, v, t=t + k * dt, jumps=sample.jumps) for k, v in enumerate(sample.values)]
    coeffs_k = [snap.coeffs if k == 0 else lap_coeffs(metric, grid, t + k * dt) for k in range(3)]
    kappa_c = target.kappa  # constant sectional curvature of the target

    if which == "energy":
        e_fields = [
            energy_density_values(coeffs_k[k], grid, target, fs[k], "extrinsic") for k in range(3)
        ]
        lhs = _dt_one_sided(*e_fields, dt) - snap.coeffs.apply(e_fields[0])
        _, ddf_sq, du = map_second_fundamental(grid, snap, target, fs[0])
        # - g^{il} g^{kj} (H_kl + 2 R_kl) F_i . F_j
        A = 2.0 * snap.ricci + (snap.H if snap.H is not None else 0.0)
        raised = np.einsum("il...,kj...,kl...->ij...", snap.g_inv, snap.g_inv, A)
        du_arr = np.stack([np.stack(d) for d in du])  # (q, dim) + shape
        metric_term = -np.einsum("ij...,ai...,aj...->...", raised, du_arr, du_arr)
        rhs = metric_term - 2.0 * ddf_sq
        if kappa_c > 0.0:
            e0f = e_fields[0]
            b = np.einsum("ai...,aj...->ij...", du_arr, du_arr)
            b_sq = np.einsum("ik...,jl...,ij...,kl...->...", snap.g_inv, snap.g_inv, b, b)
            rhs = rhs + 2.0 * kappa_c * (e0f * e0f - b_sq)
        return lhs - rhs

    if which == "tension2":
        taus = []
        for k in range(3):
            tau, mag = tension_sup(coeffs_k[k], grid, target, fs[k], "extrinsic")
            taus.append((tau, mag * mag))
        lhs = _dt_one_sided(taus[0][1], taus[1][1], taus[2][1], dt) - snap.coeffs.apply(taus[0][1])
        tau0 = taus[0][0]
        ddf, _, du = map_second_fundamental(grid, snap, target, fs[0])
        du_arr = np.stack([np.stack(d) for d in du])
        # -2 g^{kl} <D_k tau, D_l tau> with the pullback connection
        dtau = np.empty((tau0.shape[0], grid.dim) + grid.shape)
        for a in range(tau0.shape[0]):
            for i in range(grid.dim):
                dtau[a, i] = central_diff(tau0[a], i, grid.spacing[i], 0.0)
        if target.kind == "sphere":
            unit = fs[0].values / np.sqrt(np.sum(fs[0].values**2, axis=0))
            normal = np.einsum("a...,ai...->i...", unit, dtau)
            dtau = dtau - unit[:, None] * normal[None]
        grad_tau_sq = np.einsum("kl...,ak...,al...->...", snap.g_inv, dtau, dtau)
        # -2 <H, <tau, DdF>>_g
        H = snap.H if snap.H is not None else np.zeros_like(snap.g)
        Hraised = np.einsum("ka...,lb...,ab...->kl...", snap.g_inv, snap.g_inv, H)
        h_term = -2.0 * np.einsum("kl...,akl...,a...->...", Hraised, ddf, tau0)
        # - <tau, dF^k> (2 div H + grad tr H)_k
        divH = np.einsum("lm...,lmk...->k...", snap.g_inv, snap.gradH) if snap.gradH is not None else 0.0
        gradtr = (
            np.einsum("lm...,klm...->k...", snap.g_inv, snap.gradH)
            if snap.gradH is not None
            else 0.0
        )
        if snap.gradH is not None:
            vecH = 2.0 * divH + gradtr
            tau_df = np.einsum("a...,ak...->k...", tau0, du_arr)
            first_order = -np.einsum("kl...,k...,l...->...", snap.g_inv, vecH, tau_df)
        else:
            first_order = 0.0
        rhs = -2.0 * grad_tau_sq + h_term + first_order
        if kappa_c > 0.0:
            e0f = energy_density_values(snap.coeffs, grid, target, fs[0], "extrinsic")
            tau_sq = taus[0][1]
            tau_df = np.einsum("a...,ak...->k...", tau0, du_arr)
            proj = np.einsum("kl...,k...,l...->...", snap.g_inv, tau_df, tau_df)
            rhs = rhs + 2.0 * kappa_c * (e0f * tau_sq - proj)
        return lhs - rhs

    raise ValueError(f"unknown identity {which!r}")


def evolution_residual_entry(diag, which):
    sups = []
    for sample in diag.residual_samples:
        res = evolution_residual(diag, which, sample)
        sups.append(float(np.max(np.abs(res))))
    name = "energy-identity-residual" if which == "energy" else "tension-identity-residual"
    return BoundsEntry(
        name=name,
        statement=f"discrete (d/dt - Lap) identity residual for {which} stays finite",
        passed=bool(np.all(np.isfinite(sups))) and len(sups) > 0,
        times=list(diag.times[: len(sups)]), margins=[],
        fitted={"sup_residual_max": float(np.max(sups)) if sups else 0.0},
        details={"sup_residual": sups},
    )


# ---------------------------------------------------------------------------
# restart consistency


def flow_states(metric, grid, target, init, t0, out_times, formulation="extrinsic",
                settings=StepperSettings()):
    """Raw flow states at the given output times (no projection of the input)."""
    from .stepping import advance

    stage_geom = _StageGeom(metric, grid, formulation == "intrinsic")
    rhs = _flow_rhs(stage_geom, grid, target, formulation, init.jumps)
    post = _stage_post(target, formulation)

    def dt_fn(t):
        return stable_dt(stage_geom.at(t)[0], grid, settings)

    values = init.values.copy()
    t = t0
    states = []
    for t_out in out_times:
        values, _ = advance(values, t, t_out, rhs, dt_fn, settings, post)
        t = t_out
        states.append(MapField(grid, values.copy(), t=t, jumps=init.jumps))
    return states


def restart_consistency(metric, grid, target, init, T_end, T_split, formulation="extrinsic",
                        settings=StepperSettings(), n_outputs=4):
    """Split-and-restart reproducibility through a serialization round trip.

    T_split is snapped to the closest output breakpoint so the restarted leg
    replays exactly the same stage times as the unsplit run; the two final
    states must then agree to 1e-10 (they are bitwise equal in practice).
    """
    from .stepping import output_times

    if not 0.0 < T_split < T_end:
        raise ValueError("need 0 < T_split < T_end")
    breaks = output_times(0.0, T_end, n_outputs)
    j = int(np.argmin([abs(b - T_split) for b in breaks[:-1]]))
    t_split = breaks[j]
    if formulation == "extrinsic" and target.kind == "sphere":
        init = init.copy(values=target.project(init.values))
    full = flow_states(metric, grid, target, init, 0.0, breaks, formulation, settings)
    leg1 = flow_states(metric, grid, target, init, 0.0, breaks[: j + 1], formulation, settings)
    mid = field_roundtrip(leg1[-1])
    leg2 = flow_states(metric, grid, target, mid, t_split, breaks[j + 1:], formulation, settings)
    diff = float(np.max(np.abs(full[-1].values - leg2[-1].values)))
    return BoundsEntry(
        name="restart-consistency",
        statement="a run split at T_split and restarted from the stored state matches the unsplit run",
        passed=diff <= 1e-10,
        times=[T_end], margins=[1e-10 - diff],
        fitted={"sup_diff": diff, "T_split": t_split},
    )
