class ResourceGuardError(RuntimeError):
    """A configured size or memory ceiling would be exceeded."""


class SizeLimitError(ResourceGuardError):
    """Dense enumeration larger than the allowed number of outcomes."""


class MemoryGuardError(ResourceGuardError):
    """Total core entries above the configured cap."""


class PowerOverflowError(ValueError):
    """A monomial power above MAX_POWER."""
