"""Exception hierarchy shared across the package."""


class ChipMHError(Exception):
    """Base class for all package errors."""


class ConfigError(ChipMHError, ValueError):
    pass


class DataError(ChipMHError, ValueError):
    pass


class ParseError(DataError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DegenerateSampleError(DataError):
    def __init__(self, index):
        self.index = index
        super().__init__(f"sample {index} has no strictly positive entry")


class EncodingError(DataError):
    pass


class SizeError(DataError):
    pass


class DimensionError(ChipMHError, ValueError):
    pass


class TrainingError(ChipMHError, RuntimeError):
    pass


class DivergenceError(TrainingError):
    def __init__(self, epoch, loss):
        self.epoch = epoch
        self.loss = loss
        super().__init__(f"non-finite loss {loss!r} at epoch {epoch}")


class AggregationError(ChipMHError, ValueError):
    pass


class TransportError(ChipMHError, RuntimeError):
    """Failure talking to an external chip.

    ``sample_index`` is the index of the sample that was in flight, which is
    also the number of samples that completed successfully in that batch.
    """

    def __init__(self, message, sample_index=None):
        self.sample_index = sample_index
        if sample_index is not None:
            message = f"{message} (at sample {sample_index})"
        super().__init__(message)
