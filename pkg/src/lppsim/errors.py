class LppError(Exception):
    """Base class for lppsim errors."""


class DimensionMismatch(LppError, ValueError):
    pass


class LimitExceeded(LppError, ValueError):
    """Raised by oracles that refuse to enumerate more than ``limit`` paths."""


class Unreachable(LppError, ValueError):
    pass


class BoxError(LppError, ValueError):
    """A query falls outside the box a field or grid was built for."""


class DegenerateWindow(LppError, ValueError):
    """Clamp window with (numerically) zero probability mass."""


class ConfigError(LppError, ValueError):
    pass
