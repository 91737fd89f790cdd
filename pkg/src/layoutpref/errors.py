"""Exception types shared across the package."""


class LayoutPrefError(Exception):
    """Base class for all package-specific errors."""


class DegenerateElementError(LayoutPrefError):
    """A zero-area element was fed into an area-ratio metric."""


class MissingAssetError(LayoutPrefError):
    """An asset reference could not be resolved to a decodable image."""


class UnparsableVerdictError(LayoutPrefError):
    """Judge reply held no well-formed verdict object. Retryable."""


class JudgeUnavailableError(LayoutPrefError):
    """All judge attempts (including retries) failed."""


class CacheError(LayoutPrefError):
    """Decision-cache storage failed; judging proceeds uncached."""


class DatasetError(LayoutPrefError):
    """A dataset file failed validation.

    ``line`` is the 1-based line number of the offending record, or None for
    file-level problems.
    """

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
