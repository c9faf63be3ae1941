"""Exception hierarchy shared across the toolkit.

CLI exit codes: ConfigurationError -> 2, MissingInputError -> 3,
NumericFailureError -> 4.
"""


class DclkitError(Exception):
    """Base class for all toolkit errors."""


class ConfigurationError(DclkitError):
    """Invalid configuration: bad method id, out-of-range value, bad tap index."""


class InputError(DclkitError):
    """Malformed runtime input: shape mismatch, empty batch."""


class DegenerateInputError(InputError):
    """Input that makes an operation undefined, e.g. a zero-norm feature row."""


class MissingInputError(DclkitError):
    """A referenced file, directory, or checkpoint does not exist."""


class NumericFailureError(DclkitError):
    """Non-finite value produced where a finite one is required."""

    def __init__(self, message, *, iteration=None, layer_index=None, dump=None):
        super().__init__(message)
        self.iteration = iteration
        self.layer_index = layer_index
        self.dump = dump or {}


class CheckpointError(DclkitError):
    """Corrupt checkpoint container or config-hash mismatch."""
