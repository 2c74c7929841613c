"""Exception types raised across the package."""


class MplnError(Exception):
    """Base class for all package-specific errors."""


class InvalidParameterError(MplnError):
    """A model or variational parameter violates its precondition (e.g. non-SPD)."""


class InvalidInputError(MplnError):
    """User-supplied data violates a precondition (negative count, bad length)."""


class DegenerateObservationError(MplnError):
    """Every component assigns -inf ELBO to an observation."""

    def __init__(self, row: int):
        self.row = row
        super().__init__(f"observation {row} has -inf ELBO under every component")


class ComponentCollapseError(MplnError):
    """A mixture component lost all effective mass during fitting."""

    def __init__(self, component: int, iteration: int | None = None):
        self.component = component
        self.iteration = iteration
        msg = f"component {component} collapsed (effective size ~ 0)"
        if iteration is not None:
            msg += f" at outer iteration {iteration}"
        super().__init__(msg)


class DegenerateScatterError(MplnError):
    """A scatter matrix left the constrained M-step singular even after jitter."""


class NumericalFailureError(MplnError):
    """A non-finite quantity appeared during fitting."""

    def __init__(self, message: str, iteration: int | None = None):
        self.iteration = iteration
        super().__init__(message)


class InitializationError(MplnError):
    """Random partitioning could not produce G non-empty groups."""


class GridFailureError(MplnError):
    """Every cell of a grid search failed; carries the per-cell causes."""

    def __init__(self, causes: dict):
        self.causes = causes
        lines = ", ".join(f"{k}: {v}" for k, v in causes.items())
        super().__init__(f"all grid cells failed ({lines})")


class CsvFormatError(MplnError):
    """Count CSV ingestion failed; carries 1-based (row, column) when known."""

    def __init__(self, message: str, row: int | None = None, column: int | None = None):
        self.row = row
        self.column = column
        super().__init__(message)
