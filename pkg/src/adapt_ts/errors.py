"""Exception hierarchy shared by every module."""


class AdaptError(Exception):
    pass


class ValidationError(AdaptError, ValueError):
    """Bad configuration, bad labels, or a violated input contract."""


class FormatError(AdaptError):
    """A file does not follow the expected binary or text layout."""


class CorruptionError(FormatError):
    """A file header is valid but its payload is truncated or has trailing bytes."""
