"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Input violates a documented precondition or file schema."""


class DegenerateAffinityError(ValueError):
    """Affinity matrix carries no signal (all zeros)."""


class DegenerateInnovationError(ValueError):
    """Kalman innovation variance is zero in some coordinate."""


class SearchBudgetExhausted(TimeoutError):
    """Exact search ran out of its time or state budget."""

    def __init__(self, message: str = "search budget exhausted", *, elapsed_s: float | None = None,
                 expanded: int | None = None):
        super().__init__(message)
        self.elapsed_s = elapsed_s
        self.expanded = expanded


class UnsupportedSolverError(ValueError):
    """Solver variant is reserved but not implemented."""
