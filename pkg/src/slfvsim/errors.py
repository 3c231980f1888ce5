"""Exception types shared across the simulation laboratory.

Exit-code mapping used by the command line front end:
validation errors -> 2, budget errors -> 3, failed structural diagnostics -> 4.
"""

from __future__ import annotations


class ParameterError(ValueError):
    """Invalid or unsupported model/experiment parameters."""


class BudgetError(RuntimeError):
    """A configured resource budget (events, lineages, breakpoints) was hit.

    Carries enough context to report how far the computation got.
    """

    def __init__(self, message: str, *, time_reached: float | None = None,
                 count: int | None = None):
        super().__init__(message)
        self.time_reached = time_reached
        self.count = count


class DiagnosticFailure(RuntimeError):
    """A structural diagnostic (crossing / wedge / meeting-time) failed."""
