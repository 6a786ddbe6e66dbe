"""Exception types raised across the package."""


class HairTransferError(Exception):
    """Base class for all package errors."""


class ShapeError(HairTransferError, ValueError):
    """Array shapes or resolutions do not agree."""


class EmptyMask(HairTransferError, ValueError):
    pass


class EmptyRegion(HairTransferError, ValueError):
    """A mask selects no pixels at the resolution where it is used."""


class MaskOrderError(HairTransferError, ValueError):
    pass


class UndefinedIoU(HairTransferError, ValueError):
    pass


class InpaintUnderdetermined(HairTransferError, ValueError):
    pass


class LevelError(HairTransferError, KeyError):
    pass


class LandmarkError(HairTransferError, ValueError):
    pass


class ManifestError(HairTransferError, FileNotFoundError):
    pass


class DivergenceError(HairTransferError, FloatingPointError):
    """Optimization produced a non-finite gradient or loss."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
