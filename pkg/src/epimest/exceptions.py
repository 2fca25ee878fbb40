class EpimestError(Exception):
    """Base class for package errors."""


class OutOfDomainError(EpimestError, ValueError):
    pass


class DegenerateGeometryError(EpimestError, ValueError):
    pass


class InfeasiblePartitionError(EpimestError, ValueError):
    pass


class InvalidConstraintError(EpimestError, ValueError):
    pass


class InfeasibleSpecError(EpimestError, ValueError):
    pass


class InfeasibleProblemError(EpimestError):
    """Raised when phase 1 certifies that the constraint set is empty."""

    def __init__(self, message, certificate=None, level=None):
        super().__init__(message)
        self.certificate = certificate
        self.level = level


class SolverError(EpimestError):
    """Iteration limit or numerical breakdown inside the interior-point solver."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class UnsupportedDimensionError(EpimestError, ValueError):
    pass
