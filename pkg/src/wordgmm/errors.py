"""Exception types shared across the package."""


class WordgmmError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(WordgmmError, ValueError):
    """Invalid configuration or a corpus/vocabulary that cannot be used."""


class ModelFormatError(WordgmmError, ValueError):
    """Malformed, truncated, or inconsistent model file.

    Messages name the byte offset at which parsing failed.
    """

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at byte {offset})"
        super().__init__(message)
        self.offset = offset
