"""Numerical laboratory for harmonic map heat flow under evolving metrics."""

from .grid import Grid, MapField, ScalarField
from .metrics import MetricFamily, make_family
from .target import TargetManifold, make_target

__version__ = "0.1.0"

__all__ = [
    "Grid",
    "MapField",
    "ScalarField",
    "MetricFamily",
    "TargetManifold",
    "make_family",
    "make_target",
    "__version__",
]
