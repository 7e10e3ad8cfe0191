"""Exception hierarchy.

Every error carries a short ``category`` string which the CLI prints as the
machine-readable failure reason.
"""


class DscmError(Exception):
    category = "error"


class InvalidParameterError(DscmError, ValueError):
    category = "invalid-parameter"


class InvalidIndexError(DscmError, IndexError):
    category = "invalid-index"


class ConfigurationError(DscmError, ValueError):
    category = "configuration"


class BracketError(DscmError, ValueError):
    category = "bracketing"


class ConvergenceError(DscmError, RuntimeError):
    """Adaptive quadrature ran out of subdivisions.

    The best estimate and its error bound are kept so callers can decide
    whether the result is still usable.
    """

    category = "convergence"

    def __init__(self, message, estimate=float("nan"), error=float("inf")):
        super().__init__(message)
        self.estimate = estimate
        self.error = error


class InsufficientDataError(DscmError, ValueError):
    category = "insufficient-data"


class FitError(DscmError, RuntimeError):
    category = "fit-failure"

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class InfeasibleError(DscmError, ValueError):
    category = "infeasible"


class InfeasibleLeafError(InfeasibleError):
    category = "infeasible-leaf"

    def __init__(self, message, subcarrier):
        super().__init__(message)
        self.subcarrier = subcarrier


class LutError(DscmError, ValueError):
    category = "lut"


class LutRangeError(LutError):
    category = "lut-range"


class ConsistencyError(DscmError, ValueError):
    category = "consistency"


class UnitMismatchError(DscmError, ValueError):
    category = "unit-mismatch"


class ArtifactIOError(DscmError, OSError):
    category = "io"
