"""Exception hierarchy shared by all subpackages.

The CLI maps these onto exit codes: configuration problems exit with 2,
solver failures with 3 and data/schema problems with 4.
"""


class MultiscaleError(Exception):
    """Base class for every error raised by this package."""

    exit_code = 1


class ConfigError(MultiscaleError):
    exit_code = 2


class GeometryError(MultiscaleError):
    """Invalid or degenerate unit-cell geometry."""

    exit_code = 3


class ResolutionError(GeometryError):
    pass


class DegenerateGeometryError(GeometryError):
    pass


class SolverError(MultiscaleError):
    """A numerical solve failed; ``residual`` carries the last residual norm."""

    exit_code = 3

    def __init__(self, message, residual=None, step=None):
        super().__init__(message)
        self.residual = residual
        self.step = step


class CompatibilityError(SolverError):
    pass


class CFLError(SolverError):
    pass


class TrajectoryError(SolverError):
    """A cell trajectory aborted; ``step`` is the failing step index."""


class DataError(MultiscaleError):
    exit_code = 4


class SchemaError(DataError):
    pass


class CheckpointError(DataError):
    pass


class ConfigMismatchError(CheckpointError):
    pass


class IntegrityError(CheckpointError):
    pass
