"""Exception taxonomy, mirrored by the CLI's exit codes."""


class ConfigError(ValueError):
    """Bad configuration or usage (CLI exit code 1)."""


class DataError(ValueError):
    """Bad or inconsistent input data / files (CLI exit code 2)."""


class VerificationError(AssertionError):
    """A self-check failed (CLI exit code 3)."""
