"""Exception hierarchy shared by all modules."""


class HybridParError(Exception):
    """Base class for every error raised by the package."""


class InvalidMesh(HybridParError, ValueError):
    pass


class InvalidInterval(HybridParError, ValueError):
    pass


class SingularOperator(HybridParError, ArithmeticError):
    pass


class OutOfRange(HybridParError, ValueError):
    pass


class InvalidParams(HybridParError, ValueError):
    pass


class DimensionMismatch(HybridParError, ValueError):
    pass


class RequiresSecondDerivatives(HybridParError, NotImplementedError):
    pass


class SolverFailure(HybridParError, RuntimeError):
    """A state or costate solve could not be completed."""


class NewtonDiverged(SolverFailure):
    def __init__(self, step, residual, message=None):
        self.step = step
        self.residual = residual
        super().__init__(message or f"Newton failed at step {step} (residual {residual:.3e})")


class NonFiniteState(SolverFailure):
    def __init__(self, step, message=None):
        self.step = step
        super().__init__(message or f"non-finite values at step {step}")
