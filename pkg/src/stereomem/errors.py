"""Exception hierarchy shared across the package.

CLI exit-code mapping: usage errors exit 1, data errors (file formats,
scene specs, manifests) exit 2, numeric failures exit 3.
"""


class StereomemError(Exception):
    """Base class for all package-specific errors."""


class PfmError(StereomemError):
    """Base class for PFM encode/decode failures."""


class PfmHeaderError(PfmError):
    """Malformed or unsupported PFM header."""


class PfmTruncatedError(PfmError):
    """Payload shorter than the header promises."""


class PfmScaleError(PfmError):
    """Scale field is zero or unparsable, so endianness is undefined."""


class SceneSpecError(StereomemError):
    """Invalid synthetic scene description."""


class ManifestError(StereomemError):
    """Missing or malformed sequence manifest."""


class NumericsError(StereomemError):
    """Non-finite values where finite ones are required.

    Carries optional (frame, iteration) context set by the sequence driver.
    """

    def __init__(self, message, frame=None, iteration=None):
        if frame is not None:
            message = f"{message} (frame={frame}, iteration={iteration})"
        super().__init__(message)
        self.frame = frame
        self.iteration = iteration
