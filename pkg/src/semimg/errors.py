"""Exception hierarchy shared across the package."""


class SemImgError(Exception):
    """Base class for all errors raised by semimg."""


class NoFrames(SemImgError):
    pass


class DimensionMismatch(SemImgError):
    pass


class DecodeError(SemImgError):
    pass


class PairMismatch(SemImgError):
    pass


class NonFiniteInput(SemImgError):
    pass


class EmptyInput(SemImgError):
    pass


class DegenerateClusters(SemImgError):
    """Fewer distinct values than requested clusters.

    ``model`` holds a usable fallback whose centroids are the distinct values.
    """

    def __init__(self, message, model=None):
        super().__init__(message)
        self.model = model


class EvolutionDiverged(SemImgError):
    pass


class ConfigError(SemImgError):
    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


class DegenerateWindow(SemImgError):
    pass


class VideoTooShort(SemImgError):
    pass


class LengthMismatch(SemImgError):
    pass
