"""Exception hierarchy for switched-system entropy analysis."""


class SwitchedEntropyError(Exception):
    """Base exception for all analysis errors."""

    pass


class SignalDomainError(SwitchedEntropyError):
    """Raised when a time lies outside the domain of a switching signal."""

    pass


class InvalidModeError(SwitchedEntropyError):
    """Raised when a mode index is outside 1..k."""

    pass


class RateLengthError(SwitchedEntropyError):
    """Raised when a per-mode table does not have one entry per mode."""

    pass


class TooFewWindowsError(SwitchedEntropyError):
    """Raised when a folding diagnostic has fewer than ten complete windows."""

    pass


class DimensionMismatchError(SwitchedEntropyError):
    """Raised when matrices or vectors have inconsistent shapes."""

    pass


class NoCommonEigenvectorError(SwitchedEntropyError):
    """Raised when no simultaneous eigenvector is found for a mode set."""

    pass


class IllConditionedError(SwitchedEntropyError):
    """Raised when a triangularizing transform misses the residual target."""

    pass


class WrongStructureError(SwitchedEntropyError):
    """Raised when a bound is requested for an inapplicable Lie structure."""

    pass


class LatticeTooCoarseError(SwitchedEntropyError):
    """Raised when an epsilon-ball around a lattice point contains no other point."""

    pass


class EstimationConfigError(SwitchedEntropyError):
    """Raised when an estimation configuration violates its caps or ordering."""

    pass


class DegenerateFitError(SwitchedEntropyError):
    """Raised when a rate fit has fewer than two points."""

    pass


class ConfigError(SwitchedEntropyError):
    """Raised when a run configuration fails validation.

    Attributes:
        path: JSON path of the offending value (e.g. ``modes[1]``)
    """

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


class OutputError(SwitchedEntropyError):
    """Raised when a report cannot be written to the output directory."""

    pass
