"""Exception hierarchy with error categories used for CLI exit codes."""


class MrrPairsError(Exception):
    """Base class; `category` drives the CLI error report and exit code."""

    category = "internal"


class ConfigError(MrrPairsError):
    """Invalid configuration value, file, or device parameter."""

    category = "config"


class TagIoError(MrrPairsError):
    """Malformed, truncated or otherwise unreadable tag/histogram files."""

    category = "io"


class SizeError(ConfigError):
    """Requested simulation exceeds the configured memory budget."""


class NumericError(MrrPairsError):
    """Numerical failure (singular system, non-convergence, bad domain)."""

    category = "numeric"


class FitError(NumericError):
    """Fit cannot be performed (rank deficiency, non-identifiability)."""


class StatisticsError(MrrPairsError):
    """Statistical estimate is undefined on the given data."""

    category = "statistics"
