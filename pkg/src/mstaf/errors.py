"""Exception hierarchy shared by every mstaf module.

The CLI maps these onto distinct process exit codes, so library code
should raise the most specific class that applies.
"""


class MstafError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(MstafError):
    """Operands have incompatible shapes. The message names both shapes."""


class ConfigurationError(MstafError):
    """A config value violates an invariant (named in the message)."""


class UsageError(MstafError):
    """An API was called in an unsupported way."""


class DataError(MstafError):
    """A corpus, manifest, or image file is missing or malformed."""


class CheckpointError(DataError):
    """A checkpoint file failed validation; names the offending tensor."""


class NumericError(MstafError):
    """A numeric failure (NaN/Inf loss) aborted a run."""


class PlacementError(MstafError):
    """A transformed object does not fit in the probe frame (retryable)."""
