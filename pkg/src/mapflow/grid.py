"""Periodic uniform lattices on flat tori and the fields living on them.

Fields may carry per-axis seam jumps so that lifted circle-valued maps
(e.g. winding maps theta -> k*theta) differentiate exactly: crossing the
periodic seam in the +axis direction adds the jump to the value.
"""

import numpy as np

from .errors import GridMismatch


class Grid:
    """Uniform periodic lattice on T^m, m in {1, 2}.

    Index arithmetic is modulo the per-axis point counts; spacings are
    period_i / n_i and all coordinates live in [0, period_i).
    """

    def __init__(self, sizes, period=None, dim=None):
        if np.isscalar(sizes):
            sizes = (int(sizes),)
        sizes = tuple(int(n) for n in sizes)
        if dim is None:
            dim = len(sizes)
        if dim not in (1, 2):
            raise ValueError(f"grid dim must be 1 or 2, got {dim}")
        if len(sizes) != dim:
            raise ValueError("sizes length does not match dim")
        if any(n < 8 for n in sizes):
            raise ValueError(f"all grid sizes must be >= 8, got {sizes}")
        if period is None:
            period = (2.0 * np.pi,) * dim
        elif np.isscalar(period):
            period = (float(period),) * dim
        period = tuple(float(p) for p in period)
        if any(p <= 0 for p in period):
            raise ValueError("periods must be positive")
        self.dim = dim
        self.sizes = sizes
        self.period = period
        self.spacing = tuple(p / n for p, n in zip(period, sizes))

    @property
    def shape(self):
        return self.sizes

    @property
    def npoints(self):
        return int(np.prod(self.sizes))

    @property
    def cell_volume(self):
        return float(np.prod(self.spacing))

    def axes(self):
        """Per-axis coordinate arrays, h_i * arange(n_i)."""
        return [self.spacing[a] * np.arange(self.sizes[a]) for a in range(self.dim)]

    def mesh(self):
        """Coordinate arrays of shape ``self.shape`` (ij indexing)."""
        return np.meshgrid(*self.axes(), indexing="ij")

    def __eq__(self, other):
        return (
            isinstance(other, Grid)
            and self.sizes == other.sizes
            and self.period == other.period
        )

    def __hash__(self):
        return hash((self.sizes, self.period))

    def __repr__(self):
        return f"Grid(sizes={self.sizes}, period={self.period})"


def check_same_grid(a, b):
    if a != b:
        raise GridMismatch(f"grids differ: {a} vs {b}")


def shift(values, axis, offset, jump=0.0):
    """values at index (i + offset) along ``axis`` with periodic wrap.

    ``jump`` is added to entries that wrapped past the seam in the +direction
    (and subtracted for wraps in the -direction).  ``axis`` indexes the array,
    so pass ``axis + 1`` for component-major map values of shape (q, ...).
    """
    out = np.roll(values, -offset, axis=axis)
    if jump != 0.0 and offset != 0:
        out = out.copy() if out.base is not None or out is values else out
        sl = [slice(None)] * values.ndim
        if offset > 0:
            sl[axis] = slice(values.shape[axis] - offset, None)
            out[tuple(sl)] += jump
        else:
            sl[axis] = slice(None, -offset)
            out[tuple(sl)] -= jump
    return out


class ScalarField:
    """Real-valued samples on a grid with a time stamp."""

    def __init__(self, grid, values, t=0.0, jumps=None):
        values = np.asarray(values, dtype=float)
        if values.shape != grid.shape:
            raise GridMismatch(f"values shape {values.shape} does not match grid {grid.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("field values must be finite")
        self.grid = grid
        self.values = values
        self.t = float(t)
        self.jumps = tuple(jumps) if jumps is not None else (0.0,) * grid.dim

    @property
    def q(self):
        return 1

    def jump_for(self, axis):
        return self.jumps[axis]

    def copy(self, values=None, t=None):
        return ScalarField(
            self.grid,
            self.values.copy() if values is None else values,
            self.t if t is None else t,
            self.jumps,
        )


class MapField:
    """Map into R^q (extrinsic) or target chart coordinates (intrinsic).

    Values are component-major: shape (q, n1[, n2]).  ``jumps[axis]`` is a
    length-q vector added on seam crossings, one entry per component.
    """

    def __init__(self, grid, values, t=0.0, jumps=None):
        values = np.asarray(values, dtype=float)
        if values.ndim != grid.dim + 1 or values.shape[1:] != grid.shape:
            raise GridMismatch(f"values shape {values.shape} does not match grid {grid.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("field values must be finite")
        self.grid = grid
        self.values = values
        self.t = float(t)
        q = values.shape[0]
        if jumps is None:
            jumps = np.zeros((grid.dim, q))
        self.jumps = np.asarray(jumps, dtype=float).reshape(grid.dim, q)

    @property
    def q(self):
        return self.values.shape[0]

    def component(self, a):
        return ScalarField(
            self.grid,
            self.values[a],
            self.t,
            jumps=tuple(self.jumps[ax][a] for ax in range(self.grid.dim)),
        )

    def copy(self, values=None, t=None):
        return MapField(
            self.grid,
            self.values.copy() if values is None else values,
            self.t if t is None else t,
            self.jumps.copy(),
        )
