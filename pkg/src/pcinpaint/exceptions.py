"""Exception types raised across the package."""


class InpaintError(Exception):
    """Base class for all errors raised by pcinpaint."""


class DegenerateCloud(InpaintError):
    pass


class DuplicatePoints(InpaintError):
    pass


class OctreeDepthExceeded(InpaintError):
    pass


class InsufficientPoints(InpaintError):
    pass


class EmptySet(InpaintError):
    pass


class TooFewPoints(InpaintError):
    pass


class NoCandidates(InpaintError):
    pass


class DegenerateGeometry(InpaintError):
    pass


class SingularSystem(InpaintError):
    pass


class EmptyHole(InpaintError):
    pass


class CloudFormatError(InpaintError):
    pass


class EmptyHoleWarning(UserWarning):
    """A hole box removed no points."""
