"""Exception hierarchy shared by all shotbound modules."""


class ShotboundError(Exception):
    """Base class for every error raised by this package."""


class DataError(ShotboundError, ValueError):
    """Input data is malformed or inconsistent (CLI exit status 2)."""


# frameio
class MissingSignature(DataError):
    pass


class MalformedParam(DataError):
    pass


class UnsupportedChroma(DataError):
    pass


class TruncatedFrame(DataError):
    pass


class BadFrameMarker(DataError):
    pass


class NoFilesMatched(DataError):
    pass


class MalformedNetpbm(DataError):
    pass


class InconsistentDimensions(DataError):
    pass


# metrics
class GeometryMismatch(DataError):
    pass


class PlaneTooSmall(DataError):
    pass


class FrameTooSmall(DataError):
    pass


# classify / train
class WindowTooLarge(DataError):
    pass


class SchemaMismatch(DataError):
    pass


class DegenerateData(DataError):
    pass


class AnnotationOutOfRange(DataError):
    pass


class EmptyAnnotation(DataError):
    pass


class TooFewGroups(DataError):
    pass


class MalformedEventFile(DataError):
    pass


# evaluate
class UnsortedInput(DataError):
    pass


class ZeroElapsed(DataError):
    pass


# synthkit
class InvalidSpec(DataError):
    pass
