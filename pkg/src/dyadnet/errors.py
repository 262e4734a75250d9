"""Exception hierarchy.

The class names double as the error identifiers printed by the command line
tool, so callers can match on ``type(exc).__name__``.
"""


class DyadError(Exception):
    """Base class for every domain error raised by dyadnet."""


class MalformedRow(DyadError):
    pass


class UnknownLabel(DyadError):
    pass


class NonMonotonicTime(DyadError):
    pass


class EmptyFile(DyadError):
    pass


class InvalidExperiment(DyadError):
    pass


class EmptySplit(DyadError):
    pass


class EmptyInput(DyadError):
    pass


class ShapeMismatch(DyadError):
    pass


class InvalidTarget(DyadError):
    pass


class EmptySequence(DyadError):
    pass


class InvalidSpec(DyadError):
    pass


class UnknownModelName(DyadError):
    pass


class CorruptModelFile(DyadError):
    pass


class LabelOutOfSpace(DyadError):
    pass


class InvalidProfile(DyadError):
    pass
