"""Exception hierarchy shared by the solvers, samplers and the CLI."""


class FDOTTError(Exception):
    """Base class for all errors raised by this package."""


class InputError(FDOTTError, ValueError):
    """Malformed or inconsistent user input (maps to CLI exit code 2)."""


class UnbalancedError(InputError):
    """Source and target masses differ beyond tolerance."""


class SupportMismatchError(InputError):
    """A full-support precondition is violated."""


class DesignError(InputError):
    """Invalid design descriptor or contrast matrix."""


class SolverError(FDOTTError, RuntimeError):
    """A linear program could not be solved or its certificate failed.

    Parameters
    ----------
    message : str
        Human readable description.
    residuals : dict, optional
        Named residuals (primal feasibility, dual feasibility, gap) at failure.
    """

    def __init__(self, message, residuals=None):
        self.residuals = dict(residuals or {})
        if self.residuals:
            detail = ", ".join(f"{k}={v:.3g}" for k, v in self.residuals.items())
            message = f"{message} ({detail})"
        super().__init__(message)


class ConvergenceError(FDOTTError, RuntimeError):
    """An iterative generator exhausted its iteration budget."""
