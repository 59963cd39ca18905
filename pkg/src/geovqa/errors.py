"""Exception hierarchy shared across the package."""


class GeoVqaError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(GeoVqaError):
    """Tensor shapes are inconsistent with an operation's contract."""


class UsageError(GeoVqaError):
    """An operation was called in a way its contract forbids."""


class ConfigError(GeoVqaError):
    """A configuration value or key is invalid."""


class DataError(GeoVqaError):
    """Input data violates a declared invariant (e.g. class id out of range)."""


class NumericsError(GeoVqaError):
    """A forward value or gradient became NaN/Inf."""


class GenerationError(GeoVqaError):
    """Scene synthesis could not place objects within the retry budget."""


class StateError(GeoVqaError):
    """A required artifact (checkpoint, corpus) is missing or inconsistent."""


class VocabError(GeoVqaError):
    """A token or answer is not part of the closed vocabulary."""
