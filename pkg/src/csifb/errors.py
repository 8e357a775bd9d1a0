"""Exception types shared by every module."""


class CsifbError(Exception):
    pass


class ConfigurationError(CsifbError, ValueError):
    """Invalid dimensions, parameters or scheme combinations."""


class PreconditionError(CsifbError, ValueError):
    """Input violates a documented precondition (e.g. steering convention)."""


class TrainingError(CsifbError, RuntimeError):
    """K-means or autoencoder training cannot proceed or diverged."""


class FormatError(CsifbError, ValueError):
    """Malformed or corrupted persisted artifact."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset
