"""Binary field dumps: small self-describing header + row-major float64.

Layout (little endian): magic b'MFW1', int32 dim, int32 q, int32 sizes[dim],
float64 period[dim], float64 t, int32 jump flag, [float64 jumps[dim*q] when
flagged], then the raw values (q * prod(sizes) float64, row major).  The
round trip is exact, which the restart-consistency check relies on.
"""

import io
import struct

import numpy as np

from .grid import Grid, MapField, ScalarField

_MAGIC = b"MFW1"


def dump_field(field, fh):
    grid = field.grid
    q = field.q
    values = field.values if isinstance(field, MapField) else field.values[None]
    jumps = np.asarray(field.jumps, dtype=float).reshape(grid.dim, q)
    fh.write(_MAGIC)
    fh.write(struct.pack("<ii", grid.dim, q))
    fh.write(struct.pack(f"<{grid.dim}i", *grid.sizes))
    fh.write(struct.pack(f"<{grid.dim}d", *grid.period))
    fh.write(struct.pack("<d", field.t))
    has_jumps = int(np.any(jumps != 0.0))
    fh.write(struct.pack("<i", has_jumps))
    if has_jumps:
        fh.write(jumps.astype("<f8").tobytes())
    fh.write(np.ascontiguousarray(values, dtype="<f8").tobytes())


def load_field(fh):
    if fh.read(4) != _MAGIC:
        raise ValueError("not a field dump (bad magic)")
    dim, q = struct.unpack("<ii", fh.read(8))
    sizes = struct.unpack(f"<{dim}i", fh.read(4 * dim))
    period = struct.unpack(f"<{dim}d", fh.read(8 * dim))
    (t,) = struct.unpack("<d", fh.read(8))
    (has_jumps,) = struct.unpack("<i", fh.read(4))
    grid = Grid(sizes, period=period)
    jumps = np.zeros((dim, q))
    if has_jumps:
        jumps = np.frombuffer(fh.read(8 * dim * q), dtype="<f8").reshape(dim, q).copy()
    n = q * int(np.prod(sizes))
    values = np.frombuffer(fh.read(8 * n), dtype="<f8").reshape((q,) + tuple(sizes)).copy()
    if q == 1:
        return ScalarField(grid, values[0], t=t, jumps=tuple(jumps[:, 0]))
    return MapField(grid, values, t=t, jumps=jumps)


def field_roundtrip(field):
    """Serialize and reload (used by the restart check)."""
    buf = io.BytesIO()
    dump_field(field, buf)
    buf.seek(0)
    return load_field(buf)


def write_field(field, path):
    with open(path, "wb") as fh:
        dump_field(field, fh)


def read_field(path):
    with open(path, "rb") as fh:
        return load_field(fh)
