"""Time-dependent metric families g(x, t) on the torus chart.

Built-in families (closed forms documented in the README):

* ``flat``            g = delta, static.
* ``conformal-exp``   g(t) = exp(2*a*t) * delta, velocity 2*a*g.
* ``conformal-root``  g(t) = (1 + sqrt(t)) * delta, velocity delta / (2 sqrt t).
* ``aniso-torus``     m=2 only: g = diag(1, b^2), b = 1 + eps*sin(x1)*cos(omega*t).
* ``ricci-static-flat`` flat metric as a stationary Ricci-flow point (H = -2 Ric = 0).
"""

import numpy as np


class MetricFamily:
    """Evaluators g_ij(x, t) and (optionally analytic) H_ij = dg/dt.

    ``g_fn(mesh, t)`` returns an array of shape (m, m) + grid.shape; the
    symmetric velocity evaluator ``h_fn`` is optional and finite differences
    in t stand in when it is absent.
    """

    def __init__(self, label, dim, g_fn, h_fn=None, T=1.0, static=False, t_floor=0.0, params=None):
        self.label = label
        self.dim = dim
        self._g_fn = g_fn
        self._h_fn = h_fn
        self.T = float(T)
        self.static = static
        # earliest time at which the velocity is defined (conformal-root has H ~ t^{-1/2})
        self.t_floor = t_floor
        self.params = dict(params or {})

    def metric_values(self, grid, t):
        mesh = grid.mesh()
        g = np.asarray(self._g_fn(mesh, float(t)), dtype=float)
        expect = (grid.dim, grid.dim) + grid.shape
        if g.shape != expect:
            raise ValueError(f"metric evaluator returned shape {g.shape}, expected {expect}")
        return g

    def has_analytic_velocity(self):
        return self._h_fn is not None

    def velocity_values(self, grid, t, fd_dt=None):
        """H = dg/dt; analytic when available unless ``fd_dt`` forces differencing."""
        if self._h_fn is not None and fd_dt is None:
            mesh = grid.mesh()
            return np.asarray(self._h_fn(mesh, float(t)), dtype=float)
        dt = fd_dt if fd_dt is not None else 1e-5 * max(1.0, self.T)
        lo = max(self.t_floor, 0.0)
        if t - dt >= lo:
            gp = self.metric_values(grid, t + dt)
            gm = self.metric_values(grid, t - dt)
            return (gp - gm) / (2.0 * dt)
        # one-sided second-order stencil near the window edge
        g0 = self.metric_values(grid, t)
        g1 = self.metric_values(grid, t + dt)
        g2 = self.metric_values(grid, t + 2.0 * dt)
        return (-3.0 * g0 + 4.0 * g1 - g2) / (2.0 * dt)

    def __repr__(self):
        return f"MetricFamily({self.label!r}, dim={self.dim}, T={self.T})"


def _eye_field(dim, shape):
    g = np.zeros((dim, dim) + shape)
    for i in range(dim):
        g[i, i] = 1.0
    return g


def make_family(name, dim, T=1.0, **params):
    """Construct a built-in family by name."""
    if name in ("flat", "ricci-static-flat"):
        def g_fn(mesh, t, _d=dim):
            return _eye_field(_d, mesh[0].shape)

        def h_fn(mesh, t, _d=dim):
            return np.zeros((_d, _d) + mesh[0].shape)

        return MetricFamily(name, dim, g_fn, h_fn, T=T, static=True)

    if name == "conformal-exp":
        a = float(params.pop("a", 0.5))

        def g_fn(mesh, t, _d=dim, _a=a):
            return np.exp(2.0 * _a * t) * _eye_field(_d, mesh[0].shape)

        def h_fn(mesh, t, _d=dim, _a=a):
            return 2.0 * _a * np.exp(2.0 * _a * t) * _eye_field(_d, mesh[0].shape)

        fam = MetricFamily(name, dim, g_fn, h_fn, T=T, static=(a == 0.0), params={"a": a})
        _reject_extra(name, params)
        return fam

    if name == "conformal-root":
        def g_fn(mesh, t, _d=dim):
            return (1.0 + np.sqrt(max(t, 0.0))) * _eye_field(_d, mesh[0].shape)

        def h_fn(mesh, t, _d=dim):
            if t <= 0.0:
                raise ValueError("conformal-root velocity undefined at t=0")
            return (0.5 / np.sqrt(t)) * _eye_field(_d, mesh[0].shape)

        fam = MetricFamily(name, dim, g_fn, h_fn, T=T, static=False, t_floor=1e-12)
        _reject_extra(name, params)
        return fam

    if name == "aniso-torus":
        if dim != 2:
            raise ValueError("aniso-torus is a T^2 family")
        eps = float(params.pop("eps", 0.1))
        omega = float(params.pop("omega", 0.0))
        if not (-1.0 < eps < 1.0):
            raise ValueError("aniso-torus needs |eps| < 1 to stay SPD")

        def g_fn(mesh, t, _e=eps, _w=omega):
            b = 1.0 + _e * np.sin(mesh[0]) * np.cos(_w * t)
            g = np.zeros((2, 2) + mesh[0].shape)
            g[0, 0] = 1.0
            g[1, 1] = b * b
            return g

        def h_fn(mesh, t, _e=eps, _w=omega):
            b = 1.0 + _e * np.sin(mesh[0]) * np.cos(_w * t)
            db = -_e * _w * np.sin(mesh[0]) * np.sin(_w * t)
            h = np.zeros((2, 2) + mesh[0].shape)
            h[1, 1] = 2.0 * b * db
            return h

        fam = MetricFamily(
            name, dim, g_fn, h_fn, T=T, static=(omega == 0.0 or eps == 0.0),
            params={"eps": eps, "omega": omega},
        )
        _reject_extra(name, params)
        return fam

    raise ValueError(f"unknown metric family {name!r}")


def _reject_extra(name, params):
    if params:
        raise ValueError(f"unused parameters for family {name!r}: {sorted(params)}")


FAMILY_NAMES = ("flat", "conformal-exp", "conformal-root", "aniso-torus", "ricci-static-flat")
