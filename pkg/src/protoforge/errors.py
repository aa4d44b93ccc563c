"""Exception types shared across the package.

The CLI maps these onto exit codes: usage errors exit 1, DataError exits 2,
NumericError and its subclasses exit 3.
"""


class ShapeError(ValueError):
    """Array dimensions are inconsistent with the declared architecture."""


class DomainError(ValueError):
    """An input contains non-finite or otherwise out-of-domain values."""


class DataError(ValueError):
    """Dataset-level problem: bad CSV, unknown column, infeasible split."""


class NumericError(RuntimeError):
    """A computation produced non-finite intermediate values."""

    def __init__(self, message: str, *, layer: int | None = None):
        super().__init__(message)
        self.layer = layer


class TrainingError(NumericError):
    """Training diverged; carries the epoch at which the loss went non-finite."""

    def __init__(self, message: str, *, epoch: int):
        super().__init__(message)
        self.epoch = epoch


class SearchError(NumericError):
    """Gradient search hit a non-finite loss; carries the iteration index."""

    def __init__(self, message: str, *, iteration: int):
        super().__init__(message)
        self.iteration = iteration
