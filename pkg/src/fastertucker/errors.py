"""Exception types shared across the package."""


class FasterTuckerError(Exception):
    """Base class for all package errors."""


class ParseError(FasterTuckerError):
    """Malformed input file; message names the offending line."""


class ValidationError(FasterTuckerError):
    """Data violates a structural invariant (range, duplicates, shape)."""


class ConfigError(FasterTuckerError):
    """Invalid argument or option combination."""


class CapacityError(ConfigError):
    """Requested more nonzeros than the tensor has cells."""


class OracleCapacityError(FasterTuckerError):
    """Brute-force oracle would materialize too large an object."""


class StalenessError(FasterTuckerError):
    """A cached intermediate was read after its inputs changed."""


class BuildError(FasterTuckerError):
    """Index construction failed (e.g. empty tensor)."""


class CountMismatchError(FasterTuckerError):
    """Measured operation counts disagree with their closed forms."""


class DivergenceError(FasterTuckerError):
    """Training produced non-finite or runaway parameters."""

    def __init__(self, message, mode=None, epoch=None):
        super().__init__(message)
        self.mode = mode
        self.epoch = epoch
