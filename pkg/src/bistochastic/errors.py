"""Exception hierarchy shared by all modules."""


class BistochasticError(Exception):
    """Base class for every error raised by this package."""


class InvalidMatrixError(BistochasticError, ValueError):
    def __init__(self, reason: str, magnitude: float | None = None):
        self.reason = reason
        self.magnitude = magnitude
        msg = reason if magnitude is None else f"{reason} (magnitude {magnitude:.3g})"
        super().__init__(msg)


class NotBistochasticError(InvalidMatrixError):
    pass


class SinkhornError(BistochasticError):
    pass


class ZeroLineError(SinkhornError, ValueError):
    def __init__(self, axis: str, index: int):
        self.axis = axis
        self.index = index
        super().__init__(f"{axis} {index} is identically zero")


class NoConvergenceError(SinkhornError):
    def __init__(self, max_iter: int, residual: float, detail: str = ""):
        self.max_iter = max_iter
        self.residual = residual
        msg = f"no convergence after {max_iter} iterations (residual {residual:.3g})"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


class SizeCapError(BistochasticError, ValueError):
    pass


class NonMonotonePeriodError(BistochasticError, ValueError):
    pass


class UnknownPeriodError(BistochasticError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else "unknown period"


class InsufficientPeriodsError(BistochasticError):
    pass


class TargetArityMismatchError(BistochasticError, ValueError):
    pass


class CatalogSizeMismatchError(BistochasticError, ValueError):
    pass


class SizeMismatchError(BistochasticError, ValueError):
    pass


class DimensionalityCapError(BistochasticError, ValueError):
    pass


class SchemaError(BistochasticError, ValueError):
    """Input data or release plan does not match the declared schema."""


class LedgerFormatError(BistochasticError, ValueError):
    pass
