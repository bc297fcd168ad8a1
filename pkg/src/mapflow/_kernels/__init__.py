"""Stencil kernel backend selection.

The compiled extension is preferred when it imported cleanly; otherwise the
numpy implementation is used.  Set MAPFLOW_FORCE_NUMPY=1 to force the
fallback (used by the backend-equivalence tests and the benchmark).
"""

import os

from . import numpy_backend

BACKEND = "numpy"
_impl = numpy_backend

if os.environ.get("MAPFLOW_FORCE_NUMPY", "0") != "1":
    try:
        from . import _stencils as _compiled

        _impl = _compiled
        BACKEND = "compiled"
    except ImportError:
        pass

lap1 = _impl.lap1
lap2 = _impl.lap2


def backends():
    """All importable backends, keyed by name."""
    found = {"numpy": numpy_backend}
    try:
        from . import _stencils as _compiled

        found["compiled"] = _compiled
    except ImportError:
        pass
    return found
