"""Exception hierarchy shared across the package."""


class DJCGError(Exception):
    """Base class for every error raised by djcg."""


class InvalidModelError(DJCGError, ValueError):
    pass


class SectorError(DJCGError, ValueError):
    """Excitation-count mismatch or a sector outside the model's range."""


class RealizationError(DJCGError, ValueError):
    pass


class PoleError(DJCGError, ValueError):
    """A spectral parameter sits on (or too close to) a pole."""


class DomainError(DJCGError, ValueError):
    pass


class ConvergenceError(DJCGError, RuntimeError):
    def __init__(self, message, residual=float("nan")):
        super().__init__(message)
        self.residual = residual


class SingularJacobianError(ConvergenceError):
    pass


class SeedDegeneracyError(DJCGError, ValueError):
    pass


class ContinuationError(ConvergenceError):
    pass


class BranchCollisionError(ContinuationError):
    def __init__(self, message, coupling=float("nan")):
        super().__init__(message)
        self.coupling = coupling


class UnderdeterminedError(DJCGError, ValueError):
    pass


class InconsistencyError(DJCGError, ValueError):
    pass


class OracleTooLargeError(DJCGError, ValueError):
    pass


class NormalizationError(DJCGError, RuntimeError):
    pass


class UnreachableReferenceError(NormalizationError):
    pass


class DegenerateStateError(DJCGError, RuntimeError):
    pass


class DegenerateSpectrumError(DJCGError, RuntimeError):
    pass
