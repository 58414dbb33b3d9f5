"""Exception types raised across the package."""


class SymLayerError(Exception):
    """Base class for all package errors."""


class DegenerateInput(SymLayerError, ValueError):
    """Zero-norm or collinear vectors where a plane basis is required."""


class InvalidClassCount(SymLayerError, ValueError):
    """Class count below the supported minimum."""


class PlaneMissesSum(SymLayerError, ValueError):
    """The test plane does not contain the summation vector a + b."""


class NoExtremumFound(SymLayerError, ValueError):
    """Sampled values are constant, so no extremum can be located."""


class ZeroNormInput(SymLayerError, ValueError):
    """An input row has (numerically) zero norm and cannot be normalized."""

    def __init__(self, row, norm):
        self.row = int(row)
        self.norm = float(norm)
        super().__init__(f"input row {self.row} has norm {self.norm:.3e} < 1e-12")


class FormatError(SymLayerError, ValueError):
    """Malformed binary file (bad magic number or truncated payload)."""


class CountMismatch(SymLayerError, ValueError):
    """Image and label files disagree on the number of items."""
