"""Exception types shared across the package."""


class CloneOptError(Exception):
    """Base class for all package-specific errors."""


class MalformedInputError(CloneOptError):
    """A token stream, sequence, or file does not decode to a valid object."""


class ConfigError(CloneOptError):
    """A configuration value is out of bounds or a config file is invalid."""


class InsufficientDataError(CloneOptError):
    """An operation needs more measurements than were provided (N >= 2)."""


class DegenerateContextError(CloneOptError):
    """Every candidate next token has probability zero under the base model."""


class DegenerateWeightsError(CloneOptError):
    """All particle weights are zero; the ensemble has collapsed."""


class StateSpaceTooLargeError(CloneOptError):
    """Exhaustive enumeration was refused because the state space is too big."""


class ExhaustedSearchError(CloneOptError):
    """No unmeasured candidate sequence remains in the reachable search set."""
