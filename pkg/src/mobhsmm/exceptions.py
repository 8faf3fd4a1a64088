"""Exception types raised by mobhsmm."""


class MobHsmmError(Exception):
    """Base class for all user-facing errors."""


class DataError(MobHsmmError, ValueError):
    """Input data violates a schema or sequence invariant."""


class ModelFormatError(MobHsmmError, ValueError):
    """A serialized model file cannot be read."""


class NoAdmissibleSplit(MobHsmmError, ValueError):
    """No split of a node respects the minimum node size."""


class InvariantError(MobHsmmError, AssertionError):
    """An internal consistency check failed."""
