"""Exception types shared across the package."""


class InvalidArgumentError(ValueError):
    """An argument violates a documented precondition."""


class EvaluationError(ValueError):
    """A user-supplied field produced non-finite values."""


class SolverFailure(RuntimeError):
    """The linear solver could not meet its residual contract."""

    def __init__(self, message, residual=None, iteration=None):
        super().__init__(message)
        self.residual = residual
        self.iteration = iteration


class DivergenceError(RuntimeError):
    """The fixed-point iteration produced growing or non-finite iterates."""

    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration
