"""Exception types shared across the package."""


class ContractError(ValueError):
    """A documented precondition or invariant was violated by the caller."""


class DimensionError(ContractError):
    """Array shapes are incompatible with the requested operation."""


class ConfigError(ValueError):
    """An experiment configuration failed validation.

    ``field`` carries the dotted path of the offending entry so CLI error
    messages can point at the exact key.
    """

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"config field '{field}': {message}")


class CheckpointError(IOError):
    """Base class for checkpoint load failures."""


class CheckpointVersionError(CheckpointError):
    """The file's magic or format version does not match this library."""


class CheckpointTruncatedError(CheckpointError):
    """The file ends before the declared payload is complete."""


class CheckpointShapeError(CheckpointError):
    """A stored parameter's shape disagrees with the receiving model."""
