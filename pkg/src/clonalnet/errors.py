"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Operand shapes are incompatible with the requested operation."""


class CorruptionError(RuntimeError):
    """Cached state (trace, argmax map) is inconsistent with its source."""


class ConfigurationError(ValueError):
    """A configuration value or call argument is outside its valid domain."""


class IdxFormatError(ValueError):
    """An IDX byte stream carries the wrong magic number."""


class IdxTruncationError(ValueError):
    """An IDX byte stream ends before its declared payload.

    ``offset`` is the byte position at which data ran out.
    """

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class UndefinedAffinityError(ValueError):
    """Affinity requested between two all-zero vectors."""


class UndefinedAvidityError(ValueError):
    """Avidity requested over an empty set of qualified antibodies."""
