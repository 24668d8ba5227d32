"""Exception types shared across the package."""


class ParapairError(Exception):
    """Base class for all package errors."""


class DimensionError(ParapairError, ValueError):
    """Operand shapes are incompatible."""


class ContractError(ParapairError, ValueError):
    """A documented precondition was violated by the caller."""


class StateError(ParapairError, RuntimeError):
    """An object was used in a state that does not allow the operation."""


class VocabRangeError(ParapairError, IndexError):
    """A token id falls outside the vocabulary."""


class EmptySequenceError(ContractError):
    """A sequence that must be non-empty was empty."""


class FormatError(ParapairError, ValueError):
    """An input file does not follow its declared format."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class SizeError(ParapairError, ValueError):
    """Not enough data to satisfy a requested size."""


class UndefinedMetricError(ParapairError, ValueError):
    """A metric is undefined for the given inputs."""


class AlignmentError(ParapairError, ValueError):
    """Parallel inputs have different lengths."""


class TrainingAborted(ParapairError, RuntimeError):
    """Training hit a non-finite gradient."""
