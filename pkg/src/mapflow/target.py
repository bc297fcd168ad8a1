"""Embedded target manifolds: flat R^q and round spheres.

The sphere carries its nearest-point projection pi(z) = r z / |z|, whose
Hessian contracted against map gradients is the quadratic nonlinearity of
the ambient-form flow.  Only these analytically embedded targets are
supported; they cover both curvature regimes (kappa = 0 and kappa > 0).
"""

import numpy as np

from .errors import ChartSingularity, OffManifold, OutsideTube

_POLE_MARGIN = 1e-6


class TargetManifold:
    """Target (N, h) in R^q with projection and curvature upper bound.

    kind is 'euclidean' or 'sphere'; for the sphere kappa = 1/r^2 and the
    tubular radius is fixed at r/2 (a choice, flagged in reports).  The
    construction also records sup bounds of |dpi| and |pi_BC| over the tube.
    """

    def __init__(self, kind, q, r=1.0):
        if kind not in ("euclidean", "sphere"):
            raise ValueError(f"unknown target kind {kind!r}")
        self.kind = kind
        self.q = int(q)
        self.r = float(r)
        if kind == "sphere":
            if self.q < 2:
                raise ValueError("sphere target needs ambient dimension q >= 2")
            if self.r <= 0:
                raise ValueError("sphere radius must be positive")
            self.kappa = 1.0 / self.r**2
            self.tube_radius = 0.5 * self.r
            # worst case on the tube is the inner shell |z| = r/2
            self.dproj_bound = 2.0
            self.hess_bound = float(_sphere_hessian_norm(self.q, self.r, 0.5 * self.r))
        else:
            self.kappa = 0.0
            self.tube_radius = np.inf
            self.dproj_bound = 1.0
            self.hess_bound = 0.0

    @property
    def chart_dim(self):
        return self.q if self.kind == "euclidean" else self.q - 1

    # -- ambient operations -------------------------------------------------

    def distance(self, z):
        """Distance of ambient points (component-major, shape (q, ...)) to N."""
        z = np.asarray(z, dtype=float)
        if self.kind == "euclidean":
            return np.zeros(z.shape[1:])
        return np.abs(np.sqrt(np.sum(z * z, axis=0)) - self.r)

    def project(self, z):
        """Nearest-point projection; raises OutsideTube past the safety shell."""
        z = np.asarray(z, dtype=float)
        if z.shape[0] != self.q:
            raise ValueError(f"ambient points must have leading dimension {self.q}")
        if self.kind == "euclidean":
            return z.copy()
        norm = np.sqrt(np.sum(z * z, axis=0))
        dist = np.abs(norm - self.r)
        worst = float(np.max(dist))
        if worst >= self.tube_radius:
            raise OutsideTube(worst, self.tube_radius)
        return self.r * z / norm

    def projection_hessian_contraction(self, F, grad_pairs):
        """-pi^A_BC(F) * grad_pairs^BC at on-manifold points F.

        grad_pairs is the symmetric matrix <grad F^B, grad F^C>, shape
        (q, q, ...).  For a sphere-valued map this equals |grad F|^2 F / r^2.
        """
        F = np.asarray(F, dtype=float)
        grad_pairs = np.asarray(grad_pairs, dtype=float)
        if self.kind == "euclidean":
            return np.zeros_like(F)
        off = float(np.max(self.distance(F)))
        if off > 1e-8:
            raise OffManifold(f"points off the sphere by {off:.3e}")
        # pi_BC at |z|=r: (-d_AB z_C - d_AC z_B - d_BC z_A + 3 z_A z_B z_C / r^2) / r^2
        trace = np.einsum("bb...->...", grad_pairs)
        pf = np.einsum("bc...,c...->b...", grad_pairs, F)
        fpf = np.einsum("b...,b...->...", F, pf)
        return (2.0 * pf + F * trace - 3.0 * F * fpf / self.r**2) / self.r**2

    # -- chart operations ----------------------------------------------------

    def chart_metric(self, y):
        """Round metric h_ab(y) in the chart, shape (c, c) + y.shape[1:]."""
        y = np.asarray(y, dtype=float)
        c = self.chart_dim
        shape = y.shape[1:]
        h = np.zeros((c, c) + shape)
        if self.kind == "euclidean":
            for a in range(c):
                h[a, a] = 1.0
            return h
        if c == 1:  # circle, angle chart
            h[0, 0] = self.r**2
            return h
        if c == 2:  # sphere, (theta, phi) chart
            theta = y[0]
            self._check_poles(theta)
            h[0, 0] = self.r**2
            h[1, 1] = (self.r * np.sin(theta)) ** 2
            return h
        raise ValueError("charts implemented for q <= 3 spheres only")

    def target_christoffel(self, y):
        """Christoffels of the chart metric, shape (c, c, c) + y.shape[1:]."""
        y = np.asarray(y, dtype=float)
        c = self.chart_dim
        gamma = np.zeros((c, c, c) + y.shape[1:])
        if self.kind == "euclidean" or c == 1:
            return gamma
        if c == 2:
            theta = y[0]
            self._check_poles(theta)
            cot = np.cos(theta) / np.sin(theta)
            gamma[0, 1, 1] = -np.sin(theta) * np.cos(theta)
            gamma[1, 0, 1] = cot
            gamma[1, 1, 0] = cot
            return gamma
        raise ValueError("charts implemented for q <= 3 spheres only")

    def embed(self, y):
        """Chart point -> ambient coordinates."""
        y = np.asarray(y, dtype=float)
        if self.kind == "euclidean":
            return y.copy()
        if self.chart_dim == 1:
            return np.stack([self.r * np.cos(y[0]), self.r * np.sin(y[0])])
        theta, phi = y[0], y[1]
        return np.stack(
            [
                self.r * np.sin(theta) * np.cos(phi),
                self.r * np.sin(theta) * np.sin(phi),
                self.r * np.cos(theta),
            ]
        )

    def _check_poles(self, theta):
        s = np.abs(np.sin(theta))
        if np.any(s < _POLE_MARGIN):
            raise ChartSingularity(
                f"chart point within {_POLE_MARGIN} of a pole; rotate the chart"
            )

    def describe(self):
        d = {"kind": self.kind, "q": self.q, "kappa": self.kappa}
        if self.kind == "sphere":
            d.update(
                r=self.r,
                tube_radius=self.tube_radius,
                tube_radius_note="r/2 by construction choice",
                dproj_bound=self.dproj_bound,
                hess_bound=self.hess_bound,
            )
        return d

    def __repr__(self):
        if self.kind == "sphere":
            return f"TargetManifold(sphere, r={self.r}, q={self.q})"
        return f"TargetManifold(euclidean, q={self.q})"


def _sphere_hessian_norm(q, r, rho):
    """Frobenius norm of pi^A_BC of the radius-r sphere at |z| = rho."""
    z = np.zeros(q)
    z[0] = rho
    hess = np.zeros((q, q, q))
    nz = rho
    for a in range(q):
        for b in range(q):
            for c in range(q):
                hess[a, b, c] = r * (
                    -(a == b) * z[c] / nz**3
                    - (a == c) * z[b] / nz**3
                    - (b == c) * z[a] / nz**3
                    + 3.0 * z[a] * z[b] * z[c] / nz**5
                )
    return np.sqrt(np.sum(hess**2))


def make_target(kind, q=None, r=1.0):
    if kind == "euclidean":
        return TargetManifold("euclidean", q if q is not None else 1)
    if kind == "sphere":
        return TargetManifold("sphere", q if q is not None else 2, r=r)
    raise ValueError(f"unknown target kind {kind!r}")
