"""Pure-numpy implementation of the stencil hot kernels.

Kept in exact per-point operation order with the compiled twin in
``_stencils.pyx`` so both backends produce bit-identical output; the
benchmark in benchmarks/bench_stencils.py compares them.
"""

import numpy as np


def _shifted(u, axis, offset, jump):
    out = np.roll(u, -offset, axis=axis)
    if jump != 0.0:
        sl = [slice(None)] * u.ndim
        if offset > 0:
            sl[axis] = slice(u.shape[axis] - offset, None)
            out[tuple(sl)] += jump
        else:
            sl[axis] = slice(None, -offset)
            out[tuple(sl)] -= jump
    return out


def lap1(u, cface, inv_w, inv_h2, jump=0.0):
    """Conservative Laplace-Beltrami on T^1.

    cface[i] is the face coefficient between points i and i+1
    (average of sqrt(det g) * g^11); inv_w = 1/sqrt(det g).
    """
    up = _shifted(u, 0, 1, jump)
    um = _shifted(u, 0, -1, jump)
    cm = np.roll(cface, 1)
    return inv_w * ((cface * (up - u) - cm * (u - um)) * inv_h2)


def lap2(u, cf1, cf2, c12, inv_w, inv_h1sq, inv_h2sq, inv_2h1, inv_2h2, jump1=0.0, jump2=0.0):
    """Conservative Laplace-Beltrami on T^2 with symmetric mixed terms.

    cf1/cf2 are face coefficients along axes 0/1; c12 = sqrt(det g) * g^12
    at points, differenced centrally so the integral telescopes exactly.
    """
    u1p = _shifted(u, 0, 1, jump1)
    u1m = _shifted(u, 0, -1, jump1)
    u2p = _shifted(u, 1, 1, jump2)
    u2m = _shifted(u, 1, -1, jump2)
    flux1 = (cf1 * (u1p - u) - np.roll(cf1, 1, axis=0) * (u - u1m)) * inv_h1sq
    flux2 = (cf2 * (u2p - u) - np.roll(cf2, 1, axis=1) * (u - u2m)) * inv_h2sq
    w12 = c12 * ((u2p - u2m) * inv_2h2)
    w21 = c12 * ((u1p - u1m) * inv_2h1)
    mixed = (np.roll(w12, -1, axis=0) - np.roll(w12, 1, axis=0)) * inv_2h1 + (
        np.roll(w21, -1, axis=1) - np.roll(w21, 1, axis=1)
    ) * inv_2h2
    return inv_w * (flux1 + flux2 + mixed)
