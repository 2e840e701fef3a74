"""Exception hierarchy shared by all pipeline stages."""


class ImmersionError(Exception):
    """Base class; ``stage`` names the pipeline module that raised."""

    stage = "core"


class UnsupportedChartError(ImmersionError):
    stage = "geometry"


class SingularImmersionError(ImmersionError):
    stage = "geometry"


class InvalidChartError(ImmersionError):
    stage = "geometry"


class GeometryInconsistencyError(ImmersionError):
    """Two routes to the same geometric quantity disagree."""

    stage = "geometry"

    def __init__(self, route: str, discrepancy: float, tol: float):
        self.route = route
        self.discrepancy = discrepancy
        self.tol = tol
        super().__init__(f"route {route!r} disagrees by {discrepancy:.3e} (tol {tol:.1e})")


class DiracInconsistencyError(ImmersionError):
    stage = "dirac"


class DefectiveClusterError(ImmersionError):
    stage = "spectra"

    def __init__(self, indices, condition: float):
        self.indices = list(indices)
        self.condition = condition
        super().__init__(
            f"eigenvalue cluster {self.indices[:8]}{'...' if len(self.indices) > 8 else ''} "
            f"is defective (Gram condition {condition:.2e})"
        )


class RegulatorError(ImmersionError):
    stage = "spectra"


class PrecisionError(ImmersionError):
    stage = "spectra"


class IllConditionedJacobianError(ImmersionError):
    stage = "spectra"


class AnomalyInconsistencyError(ImmersionError):
    stage = "anomaly"


class ConfigError(ImmersionError):
    stage = "harness"


class NonConformalChartWarning(UserWarning):
    pass
