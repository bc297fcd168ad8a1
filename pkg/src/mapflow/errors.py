"""Exception types shared across the solvers."""


class MapflowError(Exception):
    """Base class for all package errors."""


class NonSPDMetric(MapflowError):
    """Sampled metric failed positive-definiteness at a grid point."""

    def __init__(self, point, eigenvalue):
        self.point = point
        self.eigenvalue = eigenvalue
        super().__init__(f"metric not SPD at point {point}: smallest eigenvalue {eigenvalue:.3e}")


class GridMismatch(MapflowError):
    """Fields or snapshots built on different grids were combined."""


class MetricMismatch(MapflowError):
    """Kernel tables from different metric families were combined."""


class UnstableStep(MapflowError):
    """Time stepping produced non-finite values or the CFL limit collapsed."""


class OutsideTube(MapflowError):
    """A point left the tubular neighborhood of the target manifold."""

    def __init__(self, dist, tube_radius):
        self.dist = dist
        self.tube_radius = tube_radius
        super().__init__(f"point at distance {dist:.3e} from target, tube radius {tube_radius:.3e}")


class OffManifold(MapflowError):
    """A value that must lie on the target manifold does not."""


class ChartSingularity(MapflowError):
    """Chart coordinates too close to a coordinate singularity (sphere poles)."""


class InsufficientData(MapflowError):
    """Not enough samples for the requested fit."""


class NoConvergence(MapflowError):
    """Fixed-point iteration failed to converge within the sweep budget."""

    def __init__(self, k_max, last_delta):
        self.k_max = k_max
        self.last_delta = last_delta
        super().__init__(f"no convergence after {k_max} sweeps, last update {last_delta:.3e} (shrink the time window)")


class NotASupersolution(MapflowError):
    """Candidate fed to the maximum-principle check violates its residual precondition."""

    def __init__(self, point, time, residual):
        self.point = point
        self.time = time
        self.residual = residual
        super().__init__(f"residual {residual:.3e} at point {point}, t={time:.6g} exceeds supersolution tolerance")


class InvalidChi(MapflowError):
    """Cutoff parameter outside (0, 1/8)."""


class ConfigError(MapflowError):
    """Scenario configuration failed validation; message names the offending key."""
