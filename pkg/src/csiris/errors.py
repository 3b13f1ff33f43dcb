"""Exception hierarchy shared across the package."""


class CSIrisError(Exception):
    """Base class for all package errors."""


class UnsupportedFormat(CSIrisError, ValueError):
    pass


class ImageTooSmall(CSIrisError, ValueError):
    pass


class DimensionMismatch(CSIrisError, ValueError):
    pass


class InvalidFraction(CSIrisError, ValueError):
    pass


class InconsistentMeasurements(CSIrisError, ValueError):
    pass


class ManifestError(CSIrisError):
    pass


class DegenerateContour(CSIrisError):
    pass


class LocalizationFailed(CSIrisError):
    pass


class VisibilityRejected(LocalizationFailed):
    """Iris boundary found, but less than half of it is usable."""


class LatticeMismatch(CSIrisError, ValueError):
    pass


class EmptyJointMask(CSIrisError):
    pass


class OutOfRange(CSIrisError, ValueError):
    pass


class EnrollmentFailed(CSIrisError):
    pass
