"""Exception hierarchy shared across the package."""


class HGEError(Exception):
    """Base class for all errors raised by hgelink."""


class GraphError(HGEError, ValueError):
    """Invalid graph construction or lookup."""


class DimensionError(HGEError, ValueError):
    """Shape mismatch between arrays that must agree."""


class SchemaError(HGEError, KeyError):
    """A referenced type, relation or column does not exist."""

    def __str__(self) -> str:  # KeyError quotes its message otherwise
        return str(self.args[0]) if self.args else ""


class ConfigError(HGEError, ValueError):
    """Invalid configuration value."""


class DataError(HGEError, ValueError):
    """Malformed or inconsistent input data."""


class FoldError(DataError):
    """A temporal fold cannot be built (empty train or test side)."""


class MetricError(HGEError, ValueError):
    """A metric is undefined for the given input."""


class BatchError(HGEError, ValueError):
    """A training batch is empty or unbalanced."""


class DivergenceError(HGEError, FloatingPointError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch: int, loss: float):
        super().__init__(f"non-finite loss {loss!r} at epoch {epoch}")
        self.epoch = epoch
        self.loss = loss
