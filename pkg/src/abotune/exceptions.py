"""Exception types raised across the package."""


class DomainError(ValueError):
    """A value lies outside its parameter's domain."""


class LayoutError(ValueError):
    """An encoded vector does not match the space's feature layout."""


class UndefinedCardinalityError(ValueError):
    """Cardinality requested for a space containing real parameters."""


class SpaceFormatError(ValueError):
    """A space file does not follow the expected JSON schema."""


class IncompatibleSpacesError(ValueError):
    """A shared parameter has different domains in two spaces."""


class FitError(ValueError):
    """A model cannot be fitted on the given data."""


class NumericError(ArithmeticError):
    """A numerical routine failed (e.g. Cholesky after jitter escalation)."""


class NotFittedError(RuntimeError):
    """A model was used before being fitted."""


class TrainingDivergedError(ArithmeticError):
    """VAE training produced a non-finite loss."""

    def __init__(self, epoch, loss):
        super().__init__(f"non-finite loss {loss!r} at epoch {epoch}")
        self.epoch = epoch
        self.loss = loss


class EmptyHistoryError(ValueError):
    """A history has no usable (finite / ok) records."""


class UndefinedSegmentError(ValueError):
    """A best-runtime trace is undefined on part of the integration range."""


class HistoryFormatError(ValueError):
    """A history CSV does not parse against its space."""

    def __init__(self, message, row=None):
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)
        self.row = row
