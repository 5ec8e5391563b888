"""Exception types shared across the package."""


class BudgetExhaustedError(RuntimeError):
    """Raised when a sample oracle is asked for more draws than its budget allows."""


class ContractViolationError(ValueError):
    """Raised when a data point or argument violates a declared bound."""


class UnsupportedModeError(ValueError):
    """Raised when an operation mode is not available for the given object."""


class DegenerateWeightError(ValueError):
    """Raised when a multiplicative-weights update hits an exactly-zero weight."""


class NonConvergenceError(RuntimeError):
    """Raised when an iterative certificate fails to reach its tolerance.

    Carries the best bound obtained so far in ``best_bound``.
    """

    def __init__(self, message: str, best_bound: float):
        super().__init__(f"{message} (best bound so far: {best_bound:.6g})")
        self.best_bound = best_bound
