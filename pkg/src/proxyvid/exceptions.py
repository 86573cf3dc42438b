"""Exception types raised across the package."""


class ProxyVidError(Exception):
    """Base class for all errors raised by proxyvid."""


class DegeneratePointSetError(ProxyVidError, ValueError):
    """Fewer than three non-collinear points, or coincident points."""


class ZeroAreaTriangleError(ProxyVidError, ValueError):
    pass


class EmptyLayerError(ProxyVidError, ValueError):
    pass


class FrameRangeError(ProxyVidError, IndexError):
    pass


class TrackingError(ProxyVidError, ValueError):
    pass


class NonFiniteLossError(ProxyVidError, FloatingPointError):
    """Raised by the fit loop when a batch produces a NaN/Inf loss.

    The offending batch is kept on the exception for inspection.
    """

    def __init__(self, message, step=None, batch=None):
        super().__init__(message)
        self.step = step
        self.batch = batch


class EditError(ProxyVidError, ValueError):
    pass


class FormatError(ProxyVidError, ValueError):
    """Malformed file; ``section`` and ``offset`` locate the failure."""

    def __init__(self, message, section=None, offset=None):
        if section is not None:
            message = f"{message} at section {section}"
        if offset is not None:
            message = f"{message} (offset {offset})"
        super().__init__(message)
        self.section = section
        self.offset = offset
