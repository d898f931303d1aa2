"""Exception types shared across the package."""


class LieMapError(Exception):
    """Base class for all liemap errors."""


class OdeParseError(LieMapError):
    """Raised when an ODE specification string cannot be parsed.

    Carries the 1-based line/column of the offending token when known.
    """

    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        if line is not None:
            message = f"line {line}, column {column}: {message}"
        super().__init__(message)


class UnsupportedExpressionError(OdeParseError):
    """A syntactically valid construct outside the polynomial grammar
    (division by a variable, function call, non-integer power)."""


class DivergenceError(LieMapError):
    """A numerical iteration produced non-finite values or left the
    configured guard region.  ``step_index`` locates the failure."""

    def __init__(self, message, step_index=None, sequence_index=None):
        self.step_index = step_index
        self.sequence_index = sequence_index
        super().__init__(message)


class TrainingDivergedError(LieMapError):
    """Training hit a non-finite loss.  Carries the last finite state so
    callers can inspect how far the run got."""

    def __init__(self, message, epochs_run=0, loss_history=None, best_map=None):
        self.epochs_run = epochs_run
        self.loss_history = [] if loss_history is None else loss_history
        self.best_map = best_map
        super().__init__(message)


class NoPrincipalLogError(LieMapError):
    """The linear block has an eigenvalue on the closed negative real
    axis, so no principal matrix logarithm exists."""
