class SasvError(Exception):
    """Base class for every error raised by sasvfusion."""


class ContractViolation(SasvError, ValueError):
    """A precondition of an operation was not met (shapes, ranges, stale state)."""


class ConfigError(SasvError, ValueError):
    """A configuration key is unknown or its value cannot be used."""


class MissingUtteranceError(SasvError, KeyError):
    """A trial references an utterance that the embedding store does not hold."""

    def __init__(self, message, missing=()):
        super().__init__(message)
        self.missing = list(missing)

    def __str__(self):
        return self.args[0]


class StoreFormatError(SasvError):
    """A binary store or checkpoint could not be parsed."""

    def __init__(self, message, offset):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class BadMagicError(StoreFormatError):
    pass


class VersionMismatchError(StoreFormatError):
    pass


class TruncatedFileError(StoreFormatError):
    pass


class DimensionMismatchError(StoreFormatError):
    pass


class CorruptRecordError(StoreFormatError):
    pass


class TableFormatError(ContractViolation):
    """A tab-separated input file (protocol, metadata, scores) has a malformed line."""
