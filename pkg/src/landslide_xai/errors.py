"""Exception hierarchy shared by every module.

All errors derive from :class:`LandslideError` (itself a ``ValueError``) so a
caller can catch the whole family at once; the CLI serializes the class name
and message into its error JSON.
"""


class LandslideError(ValueError):
    pass


# dataset
class MissingColumn(LandslideError):
    pass


class NonNumericCell(LandslideError):
    pass


class MissingValue(LandslideError):
    pass


class EmptyFile(LandslideError):
    pass


class InvalidLabel(LandslideError):
    pass


class DegenerateClass(LandslideError):
    pass


class TooFewDistinctValues(LandslideError):
    pass


# stats
class ConstantSample(LandslideError):
    pass


class SampleSizeOutOfRange(LandslideError):
    pass


class ZeroExpectedCell(LandslideError):
    pass


# models
class SingleClassTrain(LandslideError):
    pass


class SchemaMismatch(LandslideError):
    pass


class LengthMismatch(LandslideError):
    pass


class EmptyTrain(LandslideError):
    pass


class TooFewRows(LandslideError):
    """More neighbours requested than there are training rows."""


class NonConvergence(LandslideError):
    pass


# model selection / metrics
class ClassSmallerThanK(LandslideError):
    pass


class SingleClassLabels(LandslideError):
    pass


class FoldFitError(LandslideError):
    def __init__(self, fold, cause):
        super().__init__(f"fold {fold}: {type(cause).__name__}: {cause}")
        self.fold = fold
        self.cause = cause


# explain
class NonPositiveCover(LandslideError):
    pass


class TooManyFeatures(LandslideError):
    pass


class DropCountOutOfRange(LandslideError):
    pass


class WrongModelKind(LandslideError):
    pass


class ConfigError(LandslideError):
    pass
